from __future__ import annotations

from dataclasses import replace

import numpy as np

from ..errors import EmptyUpdateSet, InvalidK, ShapeMismatch
from .models import DenseParams
from ..scenario.types import DatasetTable
from .sgd import ClientUpdate, TrainConfig, local_train


def aggregate_fedavg(updates: list[ClientUpdate]) -> DenseParams:
    """Sample-weighted average of client parameters, accumulated in list order."""
    if not updates:
        raise EmptyUpdateSet("no client updates to aggregate")
    ref = updates[0].new_params
    for u in updates[1:]:
        if not ref.congruent(u.new_params):
            raise ShapeMismatch(f"client {u.client_id} sent shapes {u.new_params.shapes}, expected {ref.shapes}")
    total = sum(u.num_samples for u in updates)
    acc = np.zeros(ref.size)
    for u in updates:
        acc += (u.num_samples / total) * u.new_params.flat()
    return ref.with_flat(acc)


def sample_clients(total: int, k: int, round: int, seed: int) -> list[int]:
    """k distinct client ids drawn uniformly without replacement, fixed by (seed, round)."""
    if not 1 <= k <= total:
        raise InvalidK(f"cannot pick {k} of {total} clients")
    if k == total:
        return list(range(total))
    rng = np.random.default_rng([seed, round])
    return sorted(int(c) for c in rng.choice(total, size=k, replace=False))


def client_seed(seed: int, round: int, client_id: int) -> int:
    """Shuffle seed for one client's local training in one round."""
    return int(np.random.SeedSequence([seed, round, client_id]).generate_state(1)[0])


def fedavg_train(tables: list[DatasetTable], init: DenseParams, cfg: TrainConfig,
                 history: list[DenseParams] | None = None) -> DenseParams:
    """Run FedAvg in memory; the networked protocol performs the same arithmetic.

    ``tables[c]`` is client c's training split.  Each round's global model is
    appended to ``history`` when given.
    """
    params = init
    for r in range(cfg.rounds):
        chosen = sample_clients(len(tables), cfg.clients_per_round, r, cfg.seed)
        updates = [local_train(params, tables[c], replace(cfg, seed=client_seed(cfg.seed, r, c)), c)
                   for c in chosen]
        params = aggregate_fedavg(updates)
        if history is not None:
            history.append(params)
    return params
