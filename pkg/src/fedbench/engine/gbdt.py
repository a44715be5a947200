"""Second-order histogram GBDT with federated growth protocols.

Three ways to grow the same trees:

* ``centralized``: one party holds all rows and features.
* ``horizontal_histsecagg``: clients hold disjoint rows, each builds per-node
  gradient/hessian histograms over shared bin edges and the aggregator sums
  them before choosing splits.
* ``vertical_secureboost_plain``: parties hold disjoint feature blocks of the
  same aligned rows.  Only the label party computes per-row gradients; the
  others answer histogram queries and keep the thresholds of the splits they
  own.  Messages follow SecureBoost but nothing is encrypted.

Trees grow level by level.  A split at bin ``t`` of feature ``f`` sends rows
with ``bin <= t`` left; on raw values this is ``x < edges[f][t]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import EdgeMismatch
from ..scenario.types import DatasetTable, Scenario
from .models import GBDTParams, ModelSpec, link, output_task

SKETCH_POINTS_PER_BIN = 16
MASK_SCALE = 2.0 ** 32
PROTOCOLS = ("centralized", "horizontal_histsecagg", "vertical_secureboost_plain")


# ------------------------------------------------------------------ binning

def compute_bin_edges(features: np.ndarray, num_bins: int) -> list[np.ndarray]:
    """Equi-depth cut points per feature (at most num_bins - 1 distinct values)."""
    qs = np.arange(1, num_bins) / num_bins
    edges = []
    for j in range(features.shape[1]):
        col = features[:, j]
        e = np.unique(np.quantile(col, qs))
        # an edge at the minimum would leave bin 0 empty
        edges.append(e[e > col.min()])
    return edges


def quantile_sketch(features: np.ndarray, num_bins: int) -> tuple[np.ndarray, int]:
    """Per-feature summary a client shares instead of raw values."""
    size = max(2, min(features.shape[0], num_bins * SKETCH_POINTS_PER_BIN))
    pts = np.quantile(features, np.linspace(0.0, 1.0, size), axis=0).T
    return pts, features.shape[0]


def merge_sketches(sketches: list[tuple[np.ndarray, int]], num_bins: int) -> list[np.ndarray]:
    """Global bin edges from weighted client sketches."""
    num_features = sketches[0][0].shape[0]
    qs = np.arange(1, num_bins) / num_bins
    edges = []
    for j in range(num_features):
        pts = np.concatenate([s[0][j] for s in sketches])
        wts = np.concatenate([np.full(s[0].shape[1], s[1] / s[0].shape[1]) for s in sketches])
        order = np.argsort(pts, kind="mergesort")
        pts, wts = pts[order], wts[order]
        cum = np.cumsum(wts) / wts.sum()
        idx = np.minimum(np.searchsorted(cum, qs, side="left"), len(pts) - 1)
        e = np.unique(pts[idx])
        edges.append(e[e > pts[0]])
    return edges


def bin_features(features: np.ndarray, edges: list[np.ndarray]) -> np.ndarray:
    if features.shape[1] != len(edges):
        raise EdgeMismatch(f"{features.shape[1]} features but {len(edges)} edge arrays")
    out = np.empty(features.shape, dtype=np.int64)
    for j, e in enumerate(edges):
        out[:, j] = np.searchsorted(e, features[:, j], side="right")
    return out


def edges_equal(a: list[np.ndarray], b: list[np.ndarray]) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


# --------------------------------------------------------------- histograms

@dataclass
class Histogram:
    grad: np.ndarray   # (features, bins)
    hess: np.ndarray
    count: np.ndarray
    bin_edges: list[np.ndarray]

    @property
    def num_features(self) -> int:
        return self.grad.shape[0]

    @property
    def num_bins(self) -> int:
        return self.grad.shape[1]

    def totals(self) -> tuple[float, float, int]:
        return float(self.grad[0].sum()), float(self.hess[0].sum()), int(self.count[0].sum())


def _width(edges: list[np.ndarray]) -> int:
    return max((len(e) for e in edges), default=0) + 1


def _binned_histograms(binned: np.ndarray, g: np.ndarray, h: np.ndarray,
                       slots: np.ndarray, num_slots: int, width: int):
    """Accumulate (grad, hess, count) per (slot, feature, bin) with one bincount each."""
    n, f = binned.shape
    keys = ((slots[:, None] * f + np.arange(f)[None, :]) * width + binned).ravel()
    size = num_slots * f * width
    shape = (num_slots, f, width)
    grad = np.bincount(keys, weights=np.repeat(g, f), minlength=size).reshape(shape)
    hess = np.bincount(keys, weights=np.repeat(h, f), minlength=size).reshape(shape)
    cnt = np.bincount(keys, minlength=size).reshape(shape).astype(np.int64)
    return grad, hess, cnt


def build_histogram(data: DatasetTable, gradients, hessians, bin_edges: list[np.ndarray]) -> Histogram:
    g = np.asarray(gradients, dtype=np.float64)
    h = np.asarray(hessians, dtype=np.float64)
    if g.shape[0] != data.num_rows or h.shape[0] != data.num_rows:
        raise ValueError("gradients and hessians need one entry per row")
    binned = bin_features(data.features, bin_edges)
    grad, hess, cnt = _binned_histograms(binned, g, h, np.zeros(data.num_rows, dtype=np.int64), 1,
                                         _width(bin_edges))
    return Histogram(grad[0], hess[0], cnt[0], bin_edges)


def level_histograms(binned: np.ndarray, g: np.ndarray, h: np.ndarray, positions: np.ndarray,
                     frontier: list[int], edges: list[np.ndarray]) -> dict[int, Histogram]:
    """Histograms for every open node, built from the rows currently assigned to it."""
    lookup = {node: k for k, node in enumerate(frontier)}
    slot_of = np.full(int(positions.max(initial=0)) + 1, -1, dtype=np.int64)
    for node, k in lookup.items():
        if node < len(slot_of):
            slot_of[node] = k
    slots = slot_of[positions]
    rows = slots >= 0
    grad, hess, cnt = _binned_histograms(binned[rows], g[rows], h[rows], slots[rows],
                                         len(frontier), _width(edges))
    return {node: Histogram(grad[k], hess[k], cnt[k], edges) for node, k in lookup.items()}


def _mask_pairs(n: int, shape, seed: int) -> list[np.ndarray]:
    masks = [np.zeros(shape, dtype=np.int64) for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            m = np.random.default_rng([seed, i, j]).integers(
                np.iinfo(np.int64).min, np.iinfo(np.int64).max, size=shape, dtype=np.int64)
            masks[i] += m
            masks[j] -= m
    return masks


def merge_histograms(parts: list[Histogram], mask_seed: int | None = None) -> Histogram:
    """Sum histograms in list order.

    With ``mask_seed`` set, each part is encoded in 32.32 fixed point and
    offset by pairwise masks that cancel in the (wrapping int64) sum, so the
    aggregator never sees an individual part in the clear.  The merged
    result equals the unmasked fixed-point sum exactly.
    """
    if not parts:
        raise ValueError("nothing to merge")
    ref = parts[0]
    for p in parts[1:]:
        if p.grad.shape != ref.grad.shape or not edges_equal(p.bin_edges, ref.bin_edges):
            raise EdgeMismatch("histograms were built over different bin edges")
    count = np.zeros_like(ref.count)
    for p in parts:
        count += p.count
    if mask_seed is None:
        grad = np.zeros_like(ref.grad)
        hess = np.zeros_like(ref.hess)
        for p in parts:
            grad += p.grad
            hess += p.hess
        return Histogram(grad, hess, count, ref.bin_edges)
    out = []
    for field_name, tag in (("grad", 0), ("hess", 1)):
        masks = _mask_pairs(len(parts), ref.grad.shape, mask_seed * 2 + tag)
        acc = np.zeros(ref.grad.shape, dtype=np.int64)
        with np.errstate(over="ignore"):
            for p, m in zip(parts, masks):
                acc += encode_fixed(getattr(p, field_name)) + m
        out.append(acc.astype(np.float64) / MASK_SCALE)
    return Histogram(out[0], out[1], count, ref.bin_edges)


def encode_fixed(a: np.ndarray) -> np.ndarray:
    return np.round(a * MASK_SCALE).astype(np.int64)


def masked_share(values: np.ndarray, party: int, num_parties: int, seed: int) -> np.ndarray:
    """One party's fixed-point share; summing every party's share cancels the masks.

    Party ``party`` only needs the pairwise seeds it shares with the others.
    """
    acc = encode_fixed(values)
    lo, hi = np.iinfo(np.int64).min, np.iinfo(np.int64).max
    with np.errstate(over="ignore"):
        for j in range(num_parties):
            if j == party:
                continue
            a, b = min(party, j), max(party, j)
            m = np.random.default_rng([seed, a, b]).integers(lo, hi, size=values.shape, dtype=np.int64)
            acc = acc + m if party == a else acc - m
    return acc


def unmask_sum(shares: list[np.ndarray]) -> np.ndarray:
    acc = np.zeros_like(shares[0])
    with np.errstate(over="ignore"):
        for s in shares:
            acc += s
    return acc.astype(np.float64) / MASK_SCALE


def fixed_point_sum(parts: list[Histogram]) -> Histogram:
    """Unmasked fixed-point merge; reference for the masked path."""
    grad = sum(encode_fixed(p.grad) for p in parts).astype(np.float64) / MASK_SCALE
    hess = sum(encode_fixed(p.hess) for p in parts).astype(np.float64) / MASK_SCALE
    count = sum(p.count for p in parts)
    return Histogram(grad, hess, count, parts[0].bin_edges)


# ------------------------------------------------------------ split finding

@dataclass
class Split:
    feature: int
    bin: int
    gain: float
    grad_left: float
    hess_left: float
    grad_right: float
    hess_right: float
    count_left: int
    count_right: int


def split_gains(hist: Histogram, lam: float) -> tuple[np.ndarray, tuple]:
    cg = np.cumsum(hist.grad, axis=1)
    ch = np.cumsum(hist.hess, axis=1)
    cc = np.cumsum(hist.count, axis=1)
    gt, ht, ct = cg[:, -1:], ch[:, -1:], cc[:, -1:]
    gl, hl, cl = cg[:, :-1], ch[:, :-1], cc[:, :-1]
    gr, hr, cr = gt - gl, ht - hl, ct - cl
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = 0.5 * (gl ** 2 / (hl + lam) + gr ** 2 / (hr + lam) - gt ** 2 / (ht + lam))
    valid = (cl > 0) & (cr > 0) & (hl + lam > 0) & (hr + lam > 0)
    gain = np.where(valid & np.isfinite(gain), gain, -np.inf)
    return gain, (gl, hl, gr, hr, cl, cr)


def find_best_split(hist: Histogram, lam: float, min_gain: float = 0.0) -> Split | None:
    """Best (feature, bin) cut by second-order gain; lowest feature then bin wins ties."""
    if hist.num_bins < 2:
        return None
    gain, (gl, hl, gr, hr, cl, cr) = split_gains(hist, lam)
    flat = int(np.argmax(gain))
    f, t = divmod(flat, gain.shape[1])
    best = gain[f, t]
    if not np.isfinite(best) or best <= min_gain:
        return None
    return Split(f, t, float(best), float(gl[f, t]), float(hl[f, t]), float(gr[f, t]),
                 float(hr[f, t]), int(cl[f, t]), int(cr[f, t]))


# -------------------------------------------------------------------- trees

@dataclass
class Node:
    node_id: int
    depth: int
    feature: int = -1
    bin: int = -1
    threshold: float = float("nan")
    left: int = -1
    right: int = -1
    weight: float = 0.0
    owner: int = 0
    grad_sum: float = 0.0
    hess_sum: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


@dataclass
class Tree:
    nodes: list[Node]
    output: int = 0

    def split_sequence(self) -> list[tuple[int, int, int]]:
        return [(n.node_id, n.feature, n.bin) for n in self.nodes if not n.is_leaf]

    def leaf_weights(self) -> dict[int, float]:
        return {n.node_id: n.weight for n in self.nodes if n.is_leaf}

    def route(self, features: np.ndarray, router=None) -> np.ndarray:
        """Leaf id for every row.  ``router(node, rows)`` answers for splits whose threshold is private."""
        n = features.shape[0]
        pos = np.zeros(n, dtype=np.int64)
        frontier = [0]
        while frontier:
            nxt = []
            for nid in frontier:
                node = self.nodes[nid]
                if node.is_leaf:
                    continue
                rows = np.flatnonzero(pos == nid)
                if rows.size == 0:
                    nxt.extend((node.left, node.right))
                    continue
                if np.isnan(node.threshold):
                    go_left = router(node, rows)
                else:
                    go_left = features[rows, node.feature] < node.threshold
                pos[rows[go_left]] = node.left
                pos[rows[~go_left]] = node.right
                nxt.extend((node.left, node.right))
            frontier = nxt
        return pos

    def predict_raw(self, features: np.ndarray, router=None) -> np.ndarray:
        weights = np.array([nd.weight for nd in self.nodes])
        return weights[self.route(features, router)]

    def to_record(self, nid: int = 0) -> dict:
        n = self.nodes[nid]
        if n.is_leaf:
            return {"leaf": n.weight}
        rec = {"feature": n.feature, "bin": n.bin, "owner": n.owner,
               "threshold": None if np.isnan(n.threshold) else n.threshold}
        rec["left"] = self.to_record(n.left)
        rec["right"] = self.to_record(n.right)
        return rec

    @classmethod
    def from_record(cls, rec: dict, output: int = 0) -> "Tree":
        nodes: list[Node] = []

        def walk(r: dict, depth: int) -> int:
            nid = len(nodes)
            node = Node(nid, depth)
            nodes.append(node)
            if "leaf" in r:
                node.weight = float(r["leaf"])
                return nid
            node.feature, node.bin, node.owner = int(r["feature"]), int(r["bin"]), int(r.get("owner", 0))
            node.threshold = float("nan") if r["threshold"] is None else float(r["threshold"])
            node.left = walk(r["left"], depth + 1)
            node.right = walk(r["right"], depth + 1)
            return nid

        walk(rec, 0)
        return cls(nodes, output)


@dataclass
class TreeEnsemble:
    task: str
    num_classes: int
    params: GBDTParams
    trees: list[Tree] = field(default_factory=list)
    bin_edges: list[np.ndarray] | None = None

    @property
    def outputs(self) -> int:
        return self.num_classes if self.task == "multiclass" else 1

    def raw(self, features: np.ndarray, router=None) -> np.ndarray:
        out = np.zeros((features.shape[0], self.outputs))
        for t in self.trees:
            out[:, t.output] += t.predict_raw(features, router)
        return out

    def predict(self, features: np.ndarray, router=None) -> np.ndarray:
        return link(self.raw(np.asarray(features, dtype=np.float64), router), self.task)


def gradients(raw: np.ndarray, labels: np.ndarray, task: str) -> tuple[np.ndarray, np.ndarray]:
    """Per-row (g, h) for every output column."""
    if task == "binary":
        p = link(raw, "binary")
        y = labels.astype(np.float64)
        return (p - y)[:, None], (p * (1.0 - p))[:, None]
    if task == "multiclass":
        p = link(raw, "multiclass")
        onehot = np.zeros_like(p)
        onehot[np.arange(len(labels)), labels.astype(np.int64)] = 1.0
        return p - onehot, p * (1.0 - p)
    return raw - labels.astype(np.float64)[:, None], np.ones_like(raw)


class TreeBuilder:
    """Aggregator-side state for growing one tree from merged level histograms."""

    def __init__(self, params: GBDTParams, output: int = 0, owner_of=lambda f: 0):
        self.params = params
        self.output = output
        self.owner_of = owner_of
        self.nodes = [Node(0, 0)]
        self.frontier = [0]

    @property
    def done(self) -> bool:
        return not self.frontier

    def submit(self, hists: dict[int, Histogram]) -> dict[int, Split]:
        """Decide every frontier node; returns the splits made (absent = leaf)."""
        decisions: dict[int, Split] = {}
        nxt = []
        for nid in self.frontier:
            node = self.nodes[nid]
            hist = hists[nid]
            if nid == 0:
                node.grad_sum, node.hess_sum, _ = hist.totals()
            split = find_best_split(hist, self.params.lam, self.params.min_gain)
            if split is None:
                continue
            node.feature, node.bin, node.owner = split.feature, split.bin, self.owner_of(split.feature)
            edges = hist.bin_edges[split.feature] if split.feature < len(hist.bin_edges) else None
            if edges is not None and split.bin < len(edges):
                node.threshold = float(edges[split.bin])
            left = Node(len(self.nodes), node.depth + 1, grad_sum=split.grad_left, hess_sum=split.hess_left)
            self.nodes.append(left)
            right = Node(len(self.nodes), node.depth + 1, grad_sum=split.grad_right, hess_sum=split.hess_right)
            self.nodes.append(right)
            node.left, node.right = left.node_id, right.node_id
            decisions[nid] = split
            for child in (left, right):
                if child.depth < self.params.max_depth:
                    nxt.append(child.node_id)
        self.frontier = nxt
        return decisions

    def finish(self) -> Tree:
        p = self.params
        for n in self.nodes:
            if n.is_leaf:
                n.weight = -n.grad_sum / (n.hess_sum + p.lam) * p.learning_rate
        self.frontier = []
        return Tree(self.nodes, self.output)


def apply_decisions(positions: np.ndarray, binned: np.ndarray, decisions: dict[int, Split],
                    nodes: list[Node]) -> np.ndarray:
    pos = positions.copy()
    for nid, split in decisions.items():
        rows = positions == nid
        go_left = binned[:, split.feature] <= split.bin
        node = nodes[nid]
        pos[rows & go_left] = node.left
        pos[rows & ~go_left] = node.right
    return pos


# ----------------------------------------------------------- horizontal party

class HistClient:
    """A horizontal data holder in the HistSecAgg protocol."""

    def __init__(self, table: DatasetTable, task: str, num_classes: int):
        self.x = table.features
        self.y = table.labels
        self.task = task
        self.outputs = num_classes if task == "multiclass" else 1
        self.raw = np.zeros((table.num_rows, self.outputs))
        self.binned: np.ndarray | None = None
        self.edges: list[np.ndarray] | None = None

    def sketch(self, num_bins: int):
        return quantile_sketch(self.x, num_bins)

    def set_edges(self, edges: list[np.ndarray]) -> None:
        self.edges = edges
        self.binned = bin_features(self.x, edges)

    def begin_round(self) -> None:
        self.g, self.h = gradients(self.raw, self.y, self.task)

    def begin_tree(self, output: int) -> None:
        self.output = output
        self.pos = np.zeros(self.x.shape[0], dtype=np.int64)

    def histograms(self, frontier: list[int]) -> dict[int, Histogram]:
        k = self.output
        return level_histograms(self.binned, self.g[:, k], self.h[:, k], self.pos, frontier, self.edges)

    def apply_splits(self, decisions: dict[int, tuple[int, int, int, int]]) -> None:
        """decisions: node -> (feature, bin, left_id, right_id)."""
        pos = self.pos.copy()
        for nid, (f, b, left, right) in decisions.items():
            rows = self.pos == nid
            go_left = self.binned[:, f] <= b
            pos[rows & go_left] = left
            pos[rows & ~go_left] = right
        self.pos = pos

    def end_tree(self, leaf_weights: np.ndarray) -> None:
        self.raw[:, self.output] += leaf_weights[self.pos]


def _decision_tuples(decisions: dict[int, Split], nodes: list[Node]) -> dict[int, tuple[int, int, int, int]]:
    return {nid: (s.feature, s.bin, nodes[nid].left, nodes[nid].right) for nid, s in decisions.items()}


def leaf_weight_vector(tree: Tree) -> np.ndarray:
    return np.array([n.weight for n in tree.nodes])


def fit_horizontal(tables: list[DatasetTable], task: str, num_classes: int, params: GBDTParams,
                   bin_edges: list[np.ndarray] | None = None, mask_seed: int | None = None) -> TreeEnsemble:
    """HistSecAgg growth over clients' row blocks (one block reproduces centralized training)."""
    clients = [HistClient(t, task, num_classes) for t in tables]
    if bin_edges is None:
        if len(clients) == 1:
            bin_edges = compute_bin_edges(tables[0].features, params.num_bins)
        else:
            bin_edges = merge_sketches([c.sketch(params.num_bins) for c in clients], params.num_bins)
    for c in clients:
        c.set_edges(bin_edges)
    ens = TreeEnsemble(task, num_classes, params, bin_edges=bin_edges)
    for _ in range(params.num_trees):
        for c in clients:
            c.begin_round()
        for k in range(ens.outputs):
            builder = TreeBuilder(params, output=k)
            for c in clients:
                c.begin_tree(k)
            while not builder.done:
                frontier = list(builder.frontier)
                per_client = [c.histograms(frontier) for c in clients]
                merged = {nid: (per_client[0][nid] if len(clients) == 1 else
                                merge_histograms([pc[nid] for pc in per_client], mask_seed))
                          for nid in frontier}
                decisions = builder.submit(merged)
                tuples = _decision_tuples(decisions, builder.nodes)
                for c in clients:
                    c.apply_splits(tuples)
            tree = builder.finish()
            weights = leaf_weight_vector(tree)
            for c in clients:
                c.end_tree(weights)
            ens.trees.append(tree)
    return ens


# ------------------------------------------------------------ vertical party

class VerticalTreeParty:
    """A feature-block holder in plaintext SecureBoost.

    The party learns per-row gradients and node assignments (plaintext
    stand-ins for the encrypted values) but keeps its bin thresholds: the
    label party only learns which rows go left.
    """

    def __init__(self, party_id: int, features: np.ndarray, num_bins: int):
        self.party_id = party_id
        self.x = features
        self.edges = compute_bin_edges(features, num_bins)
        self.binned = bin_features(features, self.edges)
        self.owned: dict[tuple[int, int], tuple[int, float]] = {}

    def histograms(self, g: np.ndarray, h: np.ndarray, positions: np.ndarray,
                   frontier: list[int]) -> dict[int, Histogram]:
        return level_histograms(self.binned, g, h, positions, frontier, self.edges)

    def record_split(self, tree_idx: int, node_id: int, local_feature: int, bin_: int,
                     positions: np.ndarray) -> np.ndarray:
        """Store the threshold privately and return the go-left mask for the node's rows."""
        self.owned[(tree_idx, node_id)] = (local_feature, float(self.edges[local_feature][bin_]))
        rows = positions == node_id
        return self.binned[rows, local_feature] <= bin_

    def route(self, tree_idx: int, node_id: int, features: np.ndarray) -> np.ndarray:
        f, thr = self.owned[(tree_idx, node_id)]
        return features[:, f] < thr


def concat_histograms(parts: list[Histogram]) -> Histogram:
    """Stack per-party feature blocks into one histogram over the joint feature space."""
    width = max(p.num_bins for p in parts)

    def pad(a):
        return np.pad(a, ((0, 0), (0, width - a.shape[1])))

    edges: list[np.ndarray] = []
    for p in parts:
        edges.extend(p.bin_edges)
    return Histogram(np.vstack([pad(p.grad) for p in parts]), np.vstack([pad(p.hess) for p in parts]),
                     np.vstack([pad(p.count) for p in parts]), edges)


def fit_vertical(blocks: list[np.ndarray], labels: np.ndarray, task: str, num_classes: int,
                 params: GBDTParams, label_party: int = 0) -> tuple[TreeEnsemble, list[VerticalTreeParty]]:
    """Plaintext SecureBoost over aligned feature blocks; blocks[label_party] owns the labels.

    The returned ensemble carries thresholds for every party's splits so it can
    predict on joined features; the parties are returned for private routing.
    """
    parties = [VerticalTreeParty(pid, b, params.num_bins) for pid, b in enumerate(blocks)]
    offsets = np.cumsum([0] + [b.shape[1] for b in blocks])

    def owner_of(f: int) -> int:
        return int(np.searchsorted(offsets, f, side="right") - 1)

    outputs = num_classes if task == "multiclass" else 1
    raw = np.zeros((labels.shape[0], outputs))
    ens = TreeEnsemble(task, num_classes, params)
    for _ in range(params.num_trees):
        g_all, h_all = gradients(raw, labels, task)
        for k in range(outputs):
            g, h = g_all[:, k], h_all[:, k]
            builder = TreeBuilder(params, output=k, owner_of=owner_of)
            pos = np.zeros(labels.shape[0], dtype=np.int64)
            tree_idx = len(ens.trees)
            while not builder.done:
                frontier = list(builder.frontier)
                per_party = [p.histograms(g, h, pos, frontier) for p in parties]
                joint = {nid: concat_histograms([pp[nid] for pp in per_party]) for nid in frontier}
                decisions = builder.submit(joint)
                new_pos = pos.copy()
                for nid, s in decisions.items():
                    owner = owner_of(s.feature)
                    local = s.feature - offsets[owner]
                    go_left = parties[owner].record_split(tree_idx, nid, int(local), s.bin, pos)
                    rows = np.flatnonzero(pos == nid)
                    node = builder.nodes[nid]
                    new_pos[rows[go_left]] = node.left
                    new_pos[rows[~go_left]] = node.right
                pos = new_pos
            tree = builder.finish()
            raw[:, k] += leaf_weight_vector(tree)[pos]
            ens.trees.append(tree)
    return ens, parties


def gbdt_fit(scenario: Scenario, spec: ModelSpec, protocol: str,
             bin_edges: list[np.ndarray] | None = None, mask_seed: int | None = None) -> TreeEnsemble:
    """Boost ``spec.gbdt_params.num_trees`` rounds of trees under the chosen protocol."""
    from ..scenario.views import align_vertical, global_train_view

    spec.validate()
    if spec.kind != "gbdt":
        raise ValueError("gbdt_fit needs a gbdt model spec")
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}")
    params = spec.gbdt_params
    num_classes = scenario.num_classes if scenario.task != "regression" else 1
    task = output_task(num_classes)
    if protocol == "centralized":
        pooled = global_train_view(scenario)
        return fit_horizontal([pooled], task, num_classes, params, bin_edges)
    if protocol == "horizontal_histsecagg":
        if scenario.is_vertical:
            raise ValueError("HistSecAgg needs a horizontal scenario")
        tables = [c.train for c in sorted(scenario.clients, key=lambda c: c.client_id)]
        return fit_horizontal(tables, task, num_classes, params, bin_edges, mask_seed)
    if not scenario.is_vertical:
        raise ValueError("SecureBoost needs a vertical scenario")
    aligned = align_vertical(scenario)
    parties = sorted(aligned.clients, key=lambda c: c.client_id)
    label_party = aligned.vertical_split.label_party if aligned.vertical_split else 0
    labels = next(p.train.labels for p in parties if p.client_id == label_party)
    ens, _ = fit_vertical([p.train.features for p in parties], labels, task, num_classes, params, label_party)
    return ens
