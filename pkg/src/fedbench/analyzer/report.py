"""Merge per-party event logs into model and system performance figures."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from ..errors import CorruptLog, MalformedLine, MissingAggregatorLog
from ..eventlog import Elision, EventRecord, SentinelRecord, read_log
from ..orchestrator.memory import peak_memory, read_memory_csv

log = logging.getLogger(__name__)

SYSTEM_FIELDS = (
    "total_training_time_s", "client_computation_time_s", "server_computation_time_s", "other_cost_s",
    "communication_rounds", "communication_bytes", "peak_memory_bytes",
)
_ROUND = re.compile(r"^computation\.(\d+)$")


@dataclass
class PartyLog:
    name: str
    agent_type: str
    records: list[EventRecord]


@dataclass
class Durations:
    """Paired start/end spans of one log, keyed by event path."""

    spans: dict[str, list[float]] = field(default_factory=dict)
    unpaired: list[str] = field(default_factory=list)

    def total(self, pred) -> float:
        return math.fsum(d for ev, ds in self.spans.items() if pred(ev) for d in ds)


def pair_durations(records: list[EventRecord]) -> Durations:
    out = Durations()
    open_starts: dict[str, list[float]] = {}
    for rec in records:
        if rec.action == "start":
            open_starts.setdefault(rec.event, []).append(rec.timestamp)
        else:
            stack = open_starts.get(rec.event)
            if stack:
                out.spans.setdefault(rec.event, []).append(rec.timestamp - stack.pop())
    for ev, stack in open_starts.items():
        out.unpaired.extend([ev] * len(stack))
    return out


def is_computation(event: str) -> bool:
    return event == "computation" or event.startswith("computation.")


def breakdown(total: float, server: float, client: float) -> dict:
    """The residual column: whatever is neither server nor client computation."""
    return {"total_training_time_s": total, "server_computation_time_s": server,
            "client_computation_time_s": client, "other_cost_s": total - server - client}


def load_party_logs(repeat_dir: Path) -> list[PartyLog]:
    logs = []
    for path in sorted(repeat_dir.glob("*.log")):
        try:
            items = read_log(path)
        except MalformedLine as exc:
            raise CorruptLog(f"{path}: {exc}") from exc
        agent = next((i.agent_type for i in items if isinstance(i, SentinelRecord) and i.flbenchmark == "start"),
                     None)
        if agent is None:
            raise CorruptLog(f"{path}: no start sentinel")
        recs = [i for i in items if isinstance(i, EventRecord)]
        if any(isinstance(i, Elision) for i in items):
            log.warning("%s contains elided lines", path)
        logs.append(PartyLog(path.name, agent, recs))
    return logs


def analyze_repeat(repeat_dir: str | Path) -> dict:
    """System figures and the evaluation metric for one repeat directory."""
    repeat_dir = Path(repeat_dir)
    logs = load_party_logs(repeat_dir)
    aggs = [p for p in logs if p.agent_type == "aggregator"]
    if not aggs:
        raise MissingAggregatorLog(f"{repeat_dir}: no aggregator log")
    warnings: list[str] = []
    agg = aggs[0]
    agg_d = pair_durations(agg.records)
    if "training" not in agg_d.spans:
        warnings.append(f"{agg.name}: no complete top-level training span")
    total = math.fsum(agg_d.spans.get("training", []))
    server = agg_d.total(is_computation)
    client = 0.0
    per_round: dict[int, dict[str, float]] = {}
    rounds = 0
    nbytes = 0
    for p in logs:
        d = agg_d if p is agg else pair_durations(p.records)
        for ev in d.unpaired:
            warnings.append(f"{p.name}: unpaired start of {ev!r} contributes zero")
        if p.agent_type == "client":
            client += d.total(is_computation)
            for ev, ds in d.spans.items():
                m = _ROUND.match(ev)
                if m:
                    slot = per_round.setdefault(int(m.group(1)), {})
                    slot[p.name] = slot.get(p.name, 0.0) + math.fsum(ds)
        for rec in p.records:
            if rec.action == "end" and rec.event.startswith("communication"):
                rounds += 1
            if rec.action == "end" and "byte" in rec.metrics:
                nbytes += int(rec.metrics["byte"])
    system = breakdown(total, server, client)
    if system["other_cost_s"] < 0:
        warnings.append("other cost is negative: client computation overlapped (parallel clients)")
    system["communication_rounds"] = rounds
    system["communication_bytes"] = nbytes
    mem_file = repeat_dir / "memory.csv"
    per_pid: dict[int, int] = {}
    if mem_file.exists():
        system["peak_memory_bytes"], per_pid = peak_memory(read_memory_csv(mem_file))
    else:
        system["peak_memory_bytes"] = 0
        warnings.append("no memory samples")
    system["client_critical_path_s"] = math.fsum(max(v.values()) for v in per_round.values())
    metric, value = None, None
    for rec in agg.records:
        if rec.event == "model_evaluation" and rec.action == "end" and rec.metrics:
            metric, value = next(iter(rec.metrics.items()))
    if metric is None:
        warnings.append("no model_evaluation result")
    return {"repeat": repeat_dir.name, "system": system, "metric": metric, "value": value,
            "peak_memory_per_pid": {str(k): v for k, v in sorted(per_pid.items())}, "warnings": warnings}


@dataclass
class Report:
    model_perf: dict
    system_perf: dict
    provenance: dict
    per_repeat: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Report":
        return cls(d["model_perf"], d["system_perf"], d["provenance"], d.get("per_repeat", []),
                   d.get("warnings", []))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        mp = self.model_perf
        rows = [("metric", f"{mp['metric']}: {_fmt_mean_std(mp['mean'], mp['std'])}"
                 f" over {len(mp['values'])} repeat(s)")]
        for k in SYSTEM_FIELDS + ("client_critical_path_s",):
            rows.append((k, _fmt_num(self.system_perf.get(k))))
        for k in ("run_id", "scenario", "engine", "algorithm", "model", "config_hash"):
            rows.append((k, str(self.provenance.get(k, ""))))
        width = max(len(k) for k, _ in rows)
        lines = [f"{k.ljust(width)}  {v}" for k, v in rows]
        lines += [f"warning: {w}" for w in self.warnings]
        return "\n".join(lines)


def _fmt_num(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.2f}"
    return str(v)


def _fmt_mean_std(mean, std) -> str:
    if mean is None:
        return "-"
    return f"{mean:.2f}±{std:.2f}"


def mean_std(values: list[float]) -> tuple[float | None, float]:
    """Mean and sample standard deviation (0 for a single value)."""
    if not values:
        return None, 0.0
    return statistics.fmean(values), statistics.stdev(values) if len(values) > 1 else 0.0


def _repeat_dirs(run_dir: Path) -> list[Path]:
    dirs = sorted((d for d in run_dir.glob("repeat_*") if d.is_dir()), key=lambda d: int(d.name.split("_")[1]))
    if dirs:
        return dirs
    if any(run_dir.glob("*.log")):
        return [run_dir]
    raise MissingAggregatorLog(f"{run_dir}: no logs found")


def _provenance(run_dir: Path) -> dict:
    prov = {"run_id": run_dir.name}
    for cand in (run_dir / "config.yaml", run_dir.parent / "config.yaml"):
        if cand.exists():
            text = cand.read_text(encoding="utf-8")
            prov["config_hash"] = hashlib.sha256(text.encode()).hexdigest()[:16]
            cfg = yaml.safe_load(text) or {}
            model = cfg.get("model", {})
            prov.update(scenario=cfg.get("scenario"), engine=cfg.get("engine"), algorithm=cfg.get("algorithm"),
                        model=_model_label(model))
            break
    return prov


def _model_label(model) -> str:
    if isinstance(model, str):
        return model
    kind = model.get("kind", "")
    if kind == "mlp":
        return "mlp_" + "_".join(str(h) for h in model.get("hidden_layers", []))
    if kind == "gbdt":
        g = model.get("gbdt", {})
        return f"gbdt_{g.get('num_trees')}_{g.get('num_bins')}_{g.get('max_depth')}"
    return kind


def analyze(run_dir: str | Path) -> Report:
    """Report over every ``repeat_*`` directory (or a single repeat directory)."""
    run_dir = Path(run_dir)
    repeats = [analyze_repeat(d) for d in _repeat_dirs(run_dir)]
    metrics = {r["metric"] for r in repeats if r["metric"]}
    if len(metrics) > 1:
        raise CorruptLog(f"repeats disagree on the evaluation metric: {sorted(metrics)}")
    values = [float(r["value"]) for r in repeats if r["value"] is not None]
    mean, std = mean_std(values)
    system = {}
    for k in SYSTEM_FIELDS + ("client_critical_path_s",):
        vals = [r["system"][k] for r in repeats]
        system[k] = statistics.fmean(vals) if k.endswith("_s") else int(round(statistics.fmean(vals)))
    # keep the identity exact on the averaged figures as well
    system["other_cost_s"] = (system["total_training_time_s"] - system["server_computation_time_s"]
                              - system["client_computation_time_s"])
    warnings = [f"{r['repeat']}: {w}" for r in repeats for w in r["warnings"]]
    return Report({"metric": next(iter(metrics), None), "mean": mean, "std": std, "values": values},
                  system, _provenance(run_dir), repeats, warnings)


def write_report(report: Report, run_dir: str | Path) -> Path:
    path = Path(run_dir) / "report.json"
    path.write_text(report.to_json() + "\n", encoding="utf-8")
    return path


def load_report(path: str | Path) -> Report:
    return Report.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
