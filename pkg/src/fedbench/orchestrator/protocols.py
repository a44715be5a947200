"""Per-party message loops for each algorithm.

The aggregator (peer 0) drives every exchange; clients react to frames.
Only the aggregator's endpoints carry a logger, so each message appears once
as ``communication.<peer>.<round>``.  Every party wraps its model math in
``computation.<round>`` spans.

FedAvg
    MODEL_BROADCAST(global params, client id) -> CLIENT_UPDATE(new params, n)
HistSecAgg GBDT
    ROUND_START(sketch) -> HISTOGRAM(sketch);  MODEL_BROADCAST(edges)
    per level: ROUND_START(frontier) -> HISTOGRAM;  SPLIT_DECISION
    per tree:  MODEL_BROADCAST(leaf weights)
Vertical regression (label party is the aggregator)
    per batch: CLIENT_UPDATE(partial scores) -> RESIDUALS
Vertical GBDT (label party is the aggregator)
    per tree:  RESIDUALS(g, h)
    per level: ROUND_START(frontier, positions) -> HISTOGRAM
    per split owned by a client: SPLIT_DECISION(node, bin) -> SPLIT_DECISION(go-left mask)
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..engine.fedavg import aggregate_fedavg, client_seed, sample_clients
from ..engine.gbdt import (
    Histogram, HistClient, TreeBuilder, TreeEnsemble, VerticalTreeParty, concat_histograms, gradients,
    leaf_weight_vector, masked_share, merge_sketches, unmask_sum,
)
from ..engine.models import DenseParams, init_model, link, output_task, predict
from ..engine.sgd import ClientUpdate, local_train
from ..engine.vertical import VerticalParty, make_parties
from ..scenario.metrics import evaluate
from ..scenario.types import Scenario
from ..scenario.views import align_vertical, global_test_view
from ..transport.codec import decode, encode
from ..transport.endpoint import Endpoint
from ..transport.frame import MsgType
from .config import ExperimentConfig, _scenario_facts

RECV_TIMEOUT_S = 600.0


@dataclass
class Party:
    config: ExperimentConfig
    scenario: Scenario
    logger: object

    @property
    def num_classes(self) -> int:
        return self.scenario.num_classes if self.scenario.task != "regression" else 1

    @property
    def task(self) -> str:
        return output_task(self.num_classes)


def worker_count(cfg: ExperimentConfig) -> int:
    """Number of client processes the run needs."""
    setting, _, clients = _scenario_facts(cfg.scenario)
    if setting == "vertical":
        return clients - 1
    if cfg.algorithm == "fedavg" and setting == "horizontal_cross_device":
        return cfg.training.clients_per_round
    return clients


def fedavg_assignment(setting: str, total: int, k: int, rnd: int, seed: int) -> dict[int, int]:
    """worker slot -> scenario client for one round."""
    chosen = sample_clients(total, k, rnd, seed)
    if setting == "horizontal_cross_device":
        return dict(enumerate(chosen))
    return {c: c for c in chosen}


def _recv(ep: Endpoint, msg_type: MsgType):
    return decode(ep.expect(msg_type, RECV_TIMEOUT_S).payload)


def _evaluate(party: Party, predictions: np.ndarray, labels: np.ndarray) -> dict:
    metric = party.scenario.metric
    value = evaluate(predictions, labels, metric)
    return {metric: value * 100.0 if metric != "mse" else value}


def _vertical_peers(scenario: Scenario) -> tuple[int, list[int]]:
    label = scenario.vertical_split.label_party if scenario.vertical_split else 0
    others = sorted(c.client_id for c in scenario.clients if c.client_id != label)
    return label, others


# ------------------------------------------------------------------- fedavg

def fedavg_aggregator(party: Party, eps: list[Endpoint]) -> dict:
    cfg, sc, log = party.config, party.scenario, party.logger
    tr = cfg.training
    total = len(sc.clients)
    params = init_model(cfg.model, sc.num_features, party.num_classes, tr.seed)
    log.emit("training", "start")
    for r in range(tr.rounds):
        log.emit(f"training.{r}", "start")
        assign = fedavg_assignment(sc.setting, total, tr.clients_per_round, r, tr.seed)
        vec = params.flat()
        for slot, cid in assign.items():
            eps[slot].send_msg(MsgType.MODEL_BROADCAST, r, encode({"client_id": cid}, [vec]))
        replies = []
        for slot in assign:
            meta, arrays = _recv(eps[slot], MsgType.CLIENT_UPDATE)
            replies.append((meta, arrays[0]))
        with log.span(f"computation.{r}") as m:
            updates = [ClientUpdate(meta["client_id"], params.with_flat(v), meta["num_samples"], meta["loss"])
                       for meta, v in replies]
            params = aggregate_fedavg(updates)
            m["loss"] = float(np.mean([u.train_loss for u in updates]))
        log.emit(f"training.{r}", "end")
    log.emit("training", "end")
    test = global_test_view(sc)
    with log.span("model_evaluation") as m:
        m.update(_evaluate(party, _predict_dense(params, test.features), test.labels))
    for ep in eps:
        ep.send_msg(MsgType.SHUTDOWN, tr.rounds)
    return {"params": params, **m}


def _predict_dense(params: DenseParams, x: np.ndarray) -> np.ndarray:
    return predict(params, x)


def fedavg_client(party: Party, ep: Endpoint) -> None:
    cfg, sc, log = party.config, party.scenario, party.logger
    skeleton = init_model(cfg.model, sc.num_features, party.num_classes, 0)
    while True:
        frame, _ = ep.recv(RECV_TIMEOUT_S)
        if frame.msg_type == MsgType.SHUTDOWN:
            return
        meta, arrays = decode(frame.payload)
        cid, r = meta["client_id"], frame.round
        with log.span(f"computation.{r}") as m:
            data = sc.client(cid).train
            local = replace(cfg.training, seed=client_seed(cfg.training.seed, r, cid))
            upd = local_train(skeleton.with_flat(arrays[0]), data, local, cid)
            m["loss"] = upd.train_loss
        ep.send_msg(MsgType.CLIENT_UPDATE, r,
                    encode({"client_id": cid, "num_samples": upd.num_samples, "loss": upd.train_loss},
                           [upd.new_params.flat()]))


# --------------------------------------------------------- histsecagg gbdt

def _level_seed(seed: int, tree: int, level: int) -> int:
    return int(np.random.SeedSequence([seed, tree, level]).generate_state(1)[0])


def histsecagg_aggregator(party: Party, eps: list[Endpoint]) -> dict:
    cfg, sc, log = party.config, party.scenario, party.logger
    params = cfg.model.gbdt_params
    masking = cfg.hist_masking
    log.emit("training", "start")
    for ep in eps:
        ep.send_msg(MsgType.ROUND_START, 0, encode({"phase": "sketch", "num_bins": params.num_bins}))
    sketches = []
    for ep in eps:
        meta, arrays = _recv(ep, MsgType.HISTOGRAM)
        sketches.append((arrays[0], meta["rows"]))
    with log.span("computation.0"):
        edges = merge_sketches(sketches, params.num_bins)
    for ep in eps:
        ep.send_msg(MsgType.MODEL_BROADCAST, 0, encode({"phase": "edges"}, list(edges)))
    ens = TreeEnsemble(party.task, party.num_classes, params, bin_edges=edges)
    for t in range(params.num_trees):
        log.emit(f"training.{t}", "start")
        for k in range(ens.outputs):
            builder = TreeBuilder(params, output=k)
            level = 0
            while not builder.done:
                frontier = list(builder.frontier)
                meta = {"phase": "level", "output": k, "frontier": frontier,
                        "new_round": k == 0 and level == 0, "new_tree": level == 0,
                        "mask_seed": _level_seed(cfg.training.seed, t * ens.outputs + k, level) if masking else None}
                for ep in eps:
                    ep.send_msg(MsgType.ROUND_START, t, encode(meta))
                parts = [_recv(ep, MsgType.HISTOGRAM)[1] for ep in eps]
                with log.span(f"computation.{t}"):
                    if masking:
                        grad = unmask_sum([p[0] for p in parts])
                        hess = unmask_sum([p[1] for p in parts])
                    else:
                        grad, hess = _ordered_sum([p[0] for p in parts]), _ordered_sum([p[1] for p in parts])
                    count = _ordered_sum([p[2] for p in parts])
                    merged = {nid: Histogram(grad[i], hess[i], count[i], edges) for i, nid in enumerate(frontier)}
                    decisions = builder.submit(merged)
                    table = {str(nid): [s.feature, s.bin, builder.nodes[nid].left, builder.nodes[nid].right]
                             for nid, s in decisions.items()}
                for ep in eps:
                    ep.send_msg(MsgType.SPLIT_DECISION, t, encode({"decisions": table}))
                level += 1
            with log.span(f"computation.{t}"):
                tree = builder.finish()
                weights = leaf_weight_vector(tree)
            for ep in eps:
                ep.send_msg(MsgType.MODEL_BROADCAST, t, encode({"phase": "leaves", "output": k}, [weights]))
            ens.trees.append(tree)
        log.emit(f"training.{t}", "end")
    log.emit("training", "end")
    test = global_test_view(sc)
    with log.span("model_evaluation") as m:
        m.update(_evaluate(party, ens.predict(test.features), test.labels))
    for ep in eps:
        ep.send_msg(MsgType.SHUTDOWN, params.num_trees)
    return {"model": ens, **m}


def _ordered_sum(arrays: list[np.ndarray]) -> np.ndarray:
    acc = np.zeros_like(arrays[0])
    for a in arrays:
        acc += a
    return acc


def histsecagg_client(party: Party, ep: Endpoint, client_id: int, num_workers: int) -> None:
    sc, log = party.scenario, party.logger
    hc = HistClient(sc.client(client_id).train, party.task, party.num_classes)
    while True:
        frame, _ = ep.recv(RECV_TIMEOUT_S)
        t = frame.round
        if frame.msg_type == MsgType.SHUTDOWN:
            return
        meta, arrays = decode(frame.payload)
        if frame.msg_type == MsgType.ROUND_START and meta["phase"] == "sketch":
            with log.span(f"computation.{t}"):
                points, rows = hc.sketch(meta["num_bins"])
            ep.send_msg(MsgType.HISTOGRAM, t, encode({"rows": rows}, [points]))
        elif frame.msg_type == MsgType.MODEL_BROADCAST and meta["phase"] == "edges":
            with log.span(f"computation.{t}"):
                hc.set_edges(arrays)
        elif frame.msg_type == MsgType.ROUND_START:
            frontier = meta["frontier"]
            with log.span(f"computation.{t}"):
                if meta["new_round"]:
                    hc.begin_round()
                if meta["new_tree"]:
                    hc.begin_tree(meta["output"])
                hists = hc.histograms(frontier)
                grad = np.stack([hists[n].grad for n in frontier])
                hess = np.stack([hists[n].hess for n in frontier])
                count = np.stack([hists[n].count for n in frontier]).astype(np.int64)
                if meta["mask_seed"] is not None:
                    grad = masked_share(grad, client_id, num_workers, meta["mask_seed"] * 2)
                    hess = masked_share(hess, client_id, num_workers, meta["mask_seed"] * 2 + 1)
            ep.send_msg(MsgType.HISTOGRAM, t, encode({}, [grad, hess, count]))
        elif frame.msg_type == MsgType.SPLIT_DECISION:
            with log.span(f"computation.{t}"):
                hc.apply_splits({int(n): tuple(v) for n, v in meta["decisions"].items()})
        elif frame.msg_type == MsgType.MODEL_BROADCAST and meta["phase"] == "leaves":
            with log.span(f"computation.{t}"):
                hc.end_tree(arrays[0])


# ------------------------------------------------------ vertical regression

def _epoch_batches(n: int, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    perm = np.random.default_rng([seed, epoch]).permutation(n)
    return [perm[lo:lo + batch_size] for lo in range(0, n, batch_size)]


def vertical_regression_aggregator(party: Party, eps: list[Endpoint]) -> dict:
    cfg, log = party.config, party.logger
    tr = cfg.training
    sc = align_vertical(party.scenario)
    label, _ = _vertical_peers(sc)
    own = sc.client(label)
    outputs = party.num_classes if party.task == "multiclass" else 1
    me = make_parties([own.train.features], own.train.labels, outputs)[0]
    me.configure(tr.learning_rate, tr.momentum)
    n = own.train.num_rows
    log.emit("training", "start")
    for r in range(tr.rounds):
        log.emit(f"training.{r}", "start")
        losses = []
        for e in range(tr.local_epochs):
            for batch in _epoch_batches(n, tr.batch_size, tr.seed, r * tr.local_epochs + e):
                partials = [_recv(ep, MsgType.CLIENT_UPDATE)[1][0] for ep in eps]
                with log.span(f"computation.{r}") as m:
                    loss, resid = me.residuals(batch, [me.partial(batch)] + partials, party.task)
                    me.apply(batch, resid)
                    m["loss"] = loss
                losses.append(loss)
                for ep in eps:
                    ep.send_msg(MsgType.RESIDUALS, r, encode({}, [resid]))
        log.emit(f"training.{r}", "end")
    log.emit("training", "end")
    for ep in eps:
        ep.send_msg(MsgType.ROUND_START, tr.rounds, encode({"phase": "eval"}))
    partials = [_recv(ep, MsgType.CLIENT_UPDATE)[1][0] for ep in eps]
    with log.span("model_evaluation") as m:
        rows = np.arange(own.test.num_rows)
        z = me.bias + me.partial(rows, own.test.features) + sum(partials, np.zeros(1))
        m.update(_evaluate(party, link(z, party.task), own.test.labels))
    for ep in eps:
        ep.send_msg(MsgType.SHUTDOWN, tr.rounds)
    return {"loss": float(np.mean(losses)) if losses else float("nan"), **m}


def vertical_regression_client(party: Party, ep: Endpoint, party_id: int) -> None:
    cfg, log = party.config, party.logger
    tr = cfg.training
    sc = align_vertical(party.scenario)
    mine = sc.client(party_id)
    outputs = party.num_classes if party.task == "multiclass" else 1
    me = VerticalParty(party_id, mine.train.features, np.zeros((mine.train.num_features, outputs)))
    me.configure(tr.learning_rate, tr.momentum)
    n = mine.train.num_rows
    for r in range(tr.rounds):
        for e in range(tr.local_epochs):
            for batch in _epoch_batches(n, tr.batch_size, tr.seed, r * tr.local_epochs + e):
                with log.span(f"computation.{r}"):
                    part = me.partial(batch)
                ep.send_msg(MsgType.CLIENT_UPDATE, r, encode({}, [part]))
                _, arrays = _recv(ep, MsgType.RESIDUALS)
                with log.span(f"computation.{r}"):
                    me.apply(batch, arrays[0])
    _recv(ep, MsgType.ROUND_START)
    with log.span(f"computation.{tr.rounds}"):
        part = me.partial(np.arange(mine.test.num_rows), mine.test.features)
    ep.send_msg(MsgType.CLIENT_UPDATE, tr.rounds, encode({}, [part]))
    ep.expect(MsgType.SHUTDOWN, RECV_TIMEOUT_S)


# ------------------------------------------------------------ vertical gbdt

def vertical_gbdt_aggregator(party: Party, eps: list[Endpoint]) -> dict:
    cfg, log = party.config, party.logger
    params = cfg.model.gbdt_params
    sc = align_vertical(party.scenario)
    label, others = _vertical_peers(sc)
    own = sc.client(label)
    widths = [own.train.num_features] + [sc.client(c).train.num_features for c in others]
    offsets = np.cumsum([0] + widths)

    def owner_of(f: int) -> int:
        return int(np.searchsorted(offsets, f, side="right") - 1)

    me = VerticalTreeParty(0, own.train.features, params.num_bins)
    labels = own.train.labels
    n = labels.shape[0]
    ens = TreeEnsemble(party.task, party.num_classes, params)
    outputs = ens.outputs
    raw = np.zeros((n, outputs))
    blank = [[np.empty(0)] * w for w in widths[1:]]
    log.emit("training", "start")
    for t in range(params.num_trees):
        log.emit(f"training.{t}", "start")
        with log.span(f"computation.{t}"):
            g_all, h_all = gradients(raw, labels, party.task)
        for k in range(outputs):
            g, h = g_all[:, k], h_all[:, k]
            for ep in eps:
                ep.send_msg(MsgType.RESIDUALS, t, encode({"output": k}, [g, h]))
            builder = TreeBuilder(params, output=k, owner_of=owner_of)
            pos = np.zeros(n, dtype=np.int64)
            tree_idx = len(ens.trees)
            while not builder.done:
                frontier = list(builder.frontier)
                for ep in eps:
                    ep.send_msg(MsgType.ROUND_START, t, encode({"frontier": frontier}, [pos]))
                theirs = [_recv(ep, MsgType.HISTOGRAM)[1] for ep in eps]
                with log.span(f"computation.{t}"):
                    mine = me.histograms(g, h, pos, frontier)
                    joint = {}
                    for i, nid in enumerate(frontier):
                        parts = [mine[nid]] + [Histogram(a[0][i], a[1][i], a[2][i], blank[p])
                                               for p, a in enumerate(theirs)]
                        joint[nid] = concat_histograms(parts)
                    decisions = builder.submit(joint)
                new_pos = pos.copy()
                for nid, s in decisions.items():
                    owner = owner_of(s.feature)
                    local = int(s.feature - offsets[owner])
                    if owner == 0:
                        with log.span(f"computation.{t}"):
                            go_left = me.record_split(tree_idx, nid, local, s.bin, pos)
                    else:
                        ep = eps[owner - 1]
                        ep.send_msg(MsgType.SPLIT_DECISION, t,
                                    encode({"tree": tree_idx, "node": nid, "feature": local, "bin": s.bin}))
                        go_left = _recv(ep, MsgType.SPLIT_DECISION)[1][0].astype(bool)
                    rows = np.flatnonzero(pos == nid)
                    node = builder.nodes[nid]
                    new_pos[rows[go_left]] = node.left
                    new_pos[rows[~go_left]] = node.right
                pos = new_pos
            with log.span(f"computation.{t}"):
                tree = builder.finish()
                raw[:, k] += leaf_weight_vector(tree)[pos]
            ens.trees.append(tree)
        log.emit(f"training.{t}", "end")
    log.emit("training", "end")
    for ep in eps:
        ep.send_msg(MsgType.ROUND_START, params.num_trees, encode({"phase": "eval"}))
    answers = []
    for ep in eps:
        meta, arrays = _recv(ep, MsgType.SPLIT_DECISION)
        keys = arrays[0].reshape(-1, 2)
        masks = arrays[1].reshape(len(keys), -1).astype(bool) if len(keys) else np.zeros((0, 0), bool)
        answers.append({(int(a), int(b)): m for (a, b), m in zip(keys, masks)})
    with log.span("model_evaluation") as m:
        x = own.test.features
        lookup: dict = {}
        for ans in answers:
            lookup.update(ans)
        for key in me.owned:
            lookup[key] = me.route(key[0], key[1], x)
        pred = _route_ensemble(ens, lookup, x.shape[0])
        m.update(_evaluate(party, pred, own.test.labels))
    for ep in eps:
        ep.send_msg(MsgType.SHUTDOWN, params.num_trees)
    return {"model": ens, **m}


def _route_ensemble(ens: TreeEnsemble, lookup: dict, n: int) -> np.ndarray:
    raw = np.zeros((n, ens.outputs))
    for ti, tree in enumerate(ens.trees):
        pos = np.zeros(n, dtype=np.int64)
        for node in tree.nodes:
            if node.is_leaf:
                continue
            rows = pos == node.node_id
            go_left = lookup[(ti, node.node_id)]
            pos[rows & go_left] = node.left
            pos[rows & ~go_left] = node.right
        raw[:, tree.output] += leaf_weight_vector(tree)[pos]
    return link(raw, ens.task)


def vertical_gbdt_client(party: Party, ep: Endpoint, party_id: int) -> None:
    cfg, log = party.config, party.logger
    params = cfg.model.gbdt_params
    sc = align_vertical(party.scenario)
    mine = sc.client(party_id)
    with log.span("computation.0"):
        me = VerticalTreeParty(party_id, mine.train.features, params.num_bins)
    g = h = pos = None
    while True:
        frame, _ = ep.recv(RECV_TIMEOUT_S)
        t = frame.round
        if frame.msg_type == MsgType.SHUTDOWN:
            return
        meta, arrays = decode(frame.payload)
        if frame.msg_type == MsgType.RESIDUALS:
            g, h = arrays
        elif frame.msg_type == MsgType.ROUND_START and meta.get("phase") == "eval":
            with log.span(f"computation.{t}"):
                keys = sorted(me.owned)
                masks = [me.route(a, b, mine.test.features) for a, b in keys]
                key_arr = np.array(keys, dtype=np.int64).reshape(-1, 2)
                mask_arr = (np.stack(masks) if masks else np.zeros((0, mine.test.num_rows), bool)).astype(np.uint8)
            ep.send_msg(MsgType.SPLIT_DECISION, t, encode({}, [key_arr, mask_arr]))
        elif frame.msg_type == MsgType.ROUND_START:
            frontier = meta["frontier"]
            pos = arrays[0]
            with log.span(f"computation.{t}"):
                hists = me.histograms(g, h, pos, frontier)
                out = [np.stack([hists[nid].grad for nid in frontier]),
                       np.stack([hists[nid].hess for nid in frontier]),
                       np.stack([hists[nid].count for nid in frontier]).astype(np.int64)]
            ep.send_msg(MsgType.HISTOGRAM, t, encode({}, out))
        elif frame.msg_type == MsgType.SPLIT_DECISION:
            with log.span(f"computation.{t}"):
                go_left = me.record_split(meta["tree"], meta["node"], meta["feature"], meta["bin"], pos)
            ep.send_msg(MsgType.SPLIT_DECISION, t, encode({}, [go_left.astype(np.uint8)]))


# ---------------------------------------------------------------- dispatch

AGGREGATORS = {
    "fedavg": fedavg_aggregator,
    "histsecagg_gbdt": histsecagg_aggregator,
    "vertical_regression": vertical_regression_aggregator,
    "vertical_gbdt": vertical_gbdt_aggregator,
}


def run_aggregator(party: Party, eps: list[Endpoint]) -> dict:
    return AGGREGATORS[party.config.algorithm](party, eps)


def run_client(party: Party, ep: Endpoint, worker: int) -> None:
    """``worker`` is the 0-based slot; peer index on the wire is worker + 1."""
    algo = party.config.algorithm
    if algo == "fedavg":
        fedavg_client(party, ep)
    elif algo == "histsecagg_gbdt":
        histsecagg_client(party, ep, worker, worker_count(party.config))
    else:
        _, others = _vertical_peers(party.scenario)
        pid = others[worker]
        if algo == "vertical_regression":
            vertical_regression_client(party, ep, pid)
        else:
            vertical_gbdt_client(party, ep, pid)
