"""Scenario catalog, source fetching and the on-disk cache.

Every catalog entry is a JSON manifest shipped in ``manifests/``.  A manifest
names its sources (URLs, archive members, or files bundled inside an
installed package), how to prepare them and how to partition rows across
clients.  The first ``load_scenario`` call materializes the partitions as
``<cache>/<scenario>/<client>_<split>.csv`` plus a ``manifest.json`` holding
SHA-256 checksums; later calls only read and verify the cache.
"""

from __future__ import annotations

import csv
import hashlib
import importlib.resources
import io
import json
import logging
import os
import urllib.error
import urllib.request
import zipfile
from pathlib import Path

import numpy as np
from filelock import FileLock

from ..errors import ChecksumMismatch, FetchFailure, UnknownScenario
from .synthetic import SyntheticSpec, generate_synthetic
from .types import ClientPartition, DatasetTable, Scenario, VerticalLayout

log = logging.getLogger(__name__)

CACHE_ENV = "FEDBENCH_CACHE"
MANIFEST_DIR = Path(__file__).with_name("manifests")
FETCH_TIMEOUT_S = 30.0


def default_cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "fedbench"


def catalog() -> dict[str, dict]:
    out = {}
    for path in sorted(MANIFEST_DIR.glob("*.json")):
        m = json.loads(path.read_text())
        out[m["name"]] = m
    return out


def get_manifest(name: str) -> dict:
    entries = catalog()
    if name not in entries:
        raise UnknownScenario(f"{name!r} is not in the scenario catalog ({', '.join(entries)})")
    return entries[name]


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


# ---------------------------------------------------------------- CSV format

def _fmt(v: float) -> str:
    return repr(float(v))


def table_to_csv(table: DatasetTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["id"] + [f"x{j}" for j in range(table.num_features)]
    if table.labels is not None:
        header.append("y")
    w.writerow(header)
    labels = table.labels
    is_int = labels is not None and np.issubdtype(labels.dtype, np.integer)
    for k, rid in enumerate(table.ids):
        row = [rid] + [_fmt(v) for v in table.features[k]]
        if labels is not None:
            row.append(str(int(labels[k])) if is_int else _fmt(labels[k]))
        w.writerow(row)
    return buf.getvalue()


def table_from_csv(text: str, integer_labels: bool) -> DatasetTable:
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    has_y = header[-1] == "y"
    nfeat = len(header) - 1 - int(has_y)
    ids = [r[0] for r in body]
    feats = np.array([[float(v) for v in r[1:1 + nfeat]] for r in body], dtype=np.float64)
    feats = feats.reshape(len(body), nfeat)
    labels = None
    if has_y:
        dtype = np.int64 if integer_labels else np.float64
        labels = np.array([float(r[-1]) for r in body]).astype(dtype)
    return DatasetTable(ids, feats, labels)


# ------------------------------------------------------------------ sources

def _fetch_url(url: str, cache_dir: Path) -> bytes:
    dest = cache_dir / "_sources" / sha256_bytes(url.encode())[:16]
    if dest.exists():
        return dest.read_bytes()
    try:
        with urllib.request.urlopen(url, timeout=FETCH_TIMEOUT_S) as resp:
            data = resp.read()
    except (urllib.error.URLError, OSError, ValueError) as exc:
        raise FetchFailure(f"could not fetch {url}: {exc}") from exc
    dest.parent.mkdir(parents=True, exist_ok=True)
    tmp = dest.with_suffix(".part")
    tmp.write_bytes(data)
    tmp.replace(dest)
    return data


def _check(data: bytes, expected: str | None, what: str) -> None:
    if expected and sha256_bytes(data) != expected:
        raise ChecksumMismatch(f"{what}: sha256 {sha256_bytes(data)} != expected {expected}")


def _source_bytes(src: dict, cache_dir: Path) -> bytes:
    kind = src.get("kind", "url")
    if kind == "package_resource":
        try:
            data = importlib.resources.files(src["package"]).joinpath(src["resource"]).read_bytes()
        except (ModuleNotFoundError, FileNotFoundError) as exc:
            raise FetchFailure(f"bundled resource unavailable: {exc}") from exc
    elif kind == "url":
        data = _fetch_url(src["url"], cache_dir)
    else:
        raise ValueError(f"unknown source kind {kind!r}")
    _check(data, src.get("sha256"), src.get("url") or src.get("resource"))
    member = src.get("member")
    if member:
        with zipfile.ZipFile(io.BytesIO(data)) as zf:
            data = zf.read(member)
        _check(data, src.get("member_sha256"), member)
    return data


def _parse_source(data: bytes, src: dict) -> tuple[list[str] | None, list[str], np.ndarray, list]:
    """Return (ids or None, column names, feature matrix, raw label values)."""
    fmt = src.get("format", "csv")
    text = data.decode("utf-8")
    if fmt == "sklearn_csv":
        lines = text.strip().splitlines()
        n, m = (int(v) for v in lines[0].split(",")[:2])
        arr = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
        assert arr.shape == (n, m + 1)
        return None, [f"x{j}" for j in range(m)], arr[:, :m], [int(v) for v in arr[:, m]]
    if fmt == "keel_dat":
        feats, labels = [], []
        for ln in text.splitlines():
            ln = ln.strip()
            if not ln or ln.startswith("@"):
                continue
            parts = [p.strip() for p in ln.split(",")]
            feats.append([float(p) for p in parts[:-1]])
            labels.append(parts[-1])
        m = len(feats[0])
        return None, [f"x{j}" for j in range(m)], np.array(feats), labels
    if fmt == "csv":
        id_col = src.get("id_column", "id")
        label_col = src.get("label_column", "y")
        rows = list(csv.reader(io.StringIO(text)))
        header = [h.strip() for h in rows[0]]
        body = [r for r in rows[1:] if r]
        idx_id = header.index(id_col) if id_col in header else None
        idx_y = header.index(label_col) if label_col in header else None
        fcols = [j for j in range(len(header)) if j not in (idx_id, idx_y)]
        ids = [r[idx_id].strip() for r in body] if idx_id is not None else None
        feats = np.array([[float(r[j]) for j in fcols] for r in body], dtype=np.float64)
        labels = [r[idx_y].strip() for r in body] if idx_y is not None else []
        return ids, [header[j] for j in fcols], feats.reshape(len(body), len(fcols)), labels
    raise ValueError(f"unknown source format {fmt!r}")


def _encode_labels(raw: list, task: str) -> np.ndarray:
    if task == "regression":
        return np.array([float(v) for v in raw], dtype=np.float64)
    try:
        vals = [int(float(v)) for v in raw]
        return np.array(vals, dtype=np.int64)
    except ValueError:
        classes = sorted(set(raw))
        lookup = {c: k for k, c in enumerate(classes)}
        return np.array([lookup[v] for v in raw], dtype=np.int64)


def _combine(parsed: list, how: str):
    if len(parsed) == 1:
        ids, names, feats, labels = parsed[0]
        return ids, feats, labels
    if how == "rows":
        ids_all, feats, labels = [], [], []
        for k, (ids, names, f, lab) in enumerate(parsed):
            ids_all.extend(ids if ids is not None else [f"s{k}_{i}" for i in range(len(f))])
            feats.append(f)
            labels.extend(lab)
        return ids_all, np.vstack(feats), labels
    if how == "columns":
        # inner join on id, order of the first source; labels from whichever source has them
        base_ids = parsed[0][0]
        common = set(base_ids)
        for p in parsed[1:]:
            common &= set(p[0])
        order = [i for i in base_ids if i in common]
        blocks, labels = [], []
        for ids, names, f, lab in parsed:
            pos = {rid: k for k, rid in enumerate(ids)}
            take = [pos[rid] for rid in order]
            blocks.append(f[take])
            if lab and not labels:
                labels = [lab[k] for k in take]
        return order, np.hstack(blocks), labels
    raise ValueError(f"unknown combine mode {how!r}")


def _scale(feats: np.ndarray, how: str | None) -> np.ndarray:
    if not how or how == "none":
        return feats
    if how == "zscore":
        mu, sd = feats.mean(axis=0), feats.std(axis=0)
        sd[sd == 0] = 1.0
        return (feats - mu) / sd
    if how == "minmax":
        lo, hi = feats.min(axis=0), feats.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        return 2.0 * (feats - lo) / span - 1.0
    raise ValueError(f"unknown scaling {how!r}")


def _unit_hash(salt: str, rid: str) -> int:
    return int.from_bytes(hashlib.sha256(f"{salt}:{rid}".encode()).digest()[:8], "big")


def is_test_row(name: str, rid: str, test_fraction: float) -> bool:
    """Deterministic 80/20-style split keyed only on the row id."""
    return _unit_hash(f"{name}/split", rid) < test_fraction * 2**64


def build_scenario(manifest: dict, cache_dir: Path) -> Scenario:
    """Fetch sources and partition them; no caching of the result."""
    name, task = manifest["name"], manifest["task"]
    part = manifest.get("partition", {})
    if "synthetic" in manifest:
        syn = dict(manifest["synthetic"])
        seed = syn.pop("seed", 0)
        syn.setdefault("name", name)
        return generate_synthetic(SyntheticSpec(**syn), seed)

    parsed = [_parse_source(_source_bytes(s, cache_dir), s) for s in manifest["sources"]]
    ids, feats, raw_labels = _combine(parsed, manifest.get("combine", "rows"))
    if ids is None:
        ids = [f"r{i}" for i in range(feats.shape[0])]
    if len(set(ids)) != len(ids):
        raise ValueError(f"{name}: duplicate row ids in source")
    labels = _encode_labels(raw_labels, task)
    feats = _scale(feats, manifest.get("prepare", {}).get("scale"))
    frac = part.get("test_fraction", 0.2)
    test_mask = np.array([is_test_row(name, rid, frac) for rid in ids])
    num_classes = manifest.get("num_classes", 2)

    if manifest["setting"] == "vertical":
        counts = part["features_per_party"]
        label_party = part.get("label_party", 0)
        if sum(counts) != feats.shape[1]:
            raise ValueError(f"{name}: party feature counts {counts} != {feats.shape[1]} columns")
        tr, te = np.flatnonzero(~test_mask), np.flatnonzero(test_mask)
        clients, lo = [], 0
        for pid, cnt in enumerate(counts):
            cols = slice(lo, lo + cnt)
            lo += cnt
            own = pid == label_party
            clients.append(ClientPartition(
                pid,
                DatasetTable([ids[i] for i in tr], feats[tr, cols], labels[tr] if own else None),
                DatasetTable([ids[i] for i in te], feats[te, cols], labels[te] if own else None),
            ))
        layout = VerticalLayout(label_party, dict(enumerate(counts)))
        return Scenario(name, "vertical", task, manifest["metric"], clients, layout, num_classes)

    n_clients = part.get("clients", 2)
    owner = np.array([_unit_hash(f"{name}/client", rid) % n_clients for rid in ids])
    clients = []
    for cid in range(n_clients):
        tr = np.flatnonzero((owner == cid) & ~test_mask)
        te = np.flatnonzero((owner == cid) & test_mask)
        clients.append(ClientPartition(
            cid,
            DatasetTable([ids[i] for i in tr], feats[tr], labels[tr]),
            DatasetTable([ids[i] for i in te], feats[te], labels[te]),
        ))
    return Scenario(name, manifest["setting"], task, manifest["metric"], clients, None, num_classes)


# -------------------------------------------------------------------- cache

def _file_name(client_id: int, split: str) -> str:
    return f"{client_id}_{split}.csv"


def write_cache(scenario: Scenario, root: Path) -> dict:
    root.mkdir(parents=True, exist_ok=True)
    files = {}
    for c in scenario.clients:
        for split, table in (("train", c.train), ("test", c.test)):
            data = table_to_csv(table).encode()
            fname = _file_name(c.client_id, split)
            (root / fname).write_bytes(data)
            files[fname] = sha256_bytes(data)
    meta = {
        "name": scenario.name,
        "setting": scenario.setting,
        "task": scenario.task,
        "metric": scenario.metric,
        "num_classes": scenario.num_classes,
        "clients": [c.client_id for c in scenario.clients],
        "vertical_split": None if scenario.vertical_split is None else {
            "label_party": scenario.vertical_split.label_party,
            "features_per_party": {str(k): v for k, v in scenario.vertical_split.features_per_party.items()},
        },
        "files": files,
    }
    (root / "manifest.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return meta


def read_cache(root: Path) -> Scenario:
    meta = json.loads((root / "manifest.json").read_text())
    integer = meta["task"] != "regression"
    clients = []
    for cid in meta["clients"]:
        tables = []
        for split in ("train", "test"):
            fname = _file_name(cid, split)
            data = (root / fname).read_bytes()
            if sha256_bytes(data) != meta["files"][fname]:
                raise ChecksumMismatch(f"cached file {root / fname} does not match its checksum")
            tables.append(table_from_csv(data.decode(), integer))
        clients.append(ClientPartition(cid, *tables))
    vs = meta.get("vertical_split")
    layout = None
    if vs:
        layout = VerticalLayout(vs["label_party"], {int(k): v for k, v in vs["features_per_party"].items()})
    return Scenario(meta["name"], meta["setting"], meta["task"], meta["metric"], clients, layout,
                    meta.get("num_classes", 2))


def load_scenario(name: str, cache_dir: str | os.PathLike | None = None,
                  manifest: dict | None = None) -> Scenario:
    """Return the named scenario, materializing it in the cache on first use."""
    if manifest is None:
        manifest = get_manifest(name)
    cache = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    root = cache / manifest["name"]
    if (root / "manifest.json").exists():
        return read_cache(root)
    cache.mkdir(parents=True, exist_ok=True)
    with FileLock(str(cache / f".{manifest['name']}.lock")):
        if (root / "manifest.json").exists():
            return read_cache(root)
        log.info("materializing scenario %s under %s", manifest["name"], root)
        scenario = build_scenario(manifest, cache)
        expected = manifest.get("expected_rows")
        if expected is not None and scenario.total_rows != expected:
            raise ChecksumMismatch(
                f"{manifest['name']}: expected {expected} rows, source produced {scenario.total_rows}")
        write_cache(scenario, root)
    # re-read so the first call returns exactly what later calls will see
    return read_cache(root)
