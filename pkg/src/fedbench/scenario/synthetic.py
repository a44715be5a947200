"""Network-free scenarios drawn from a known linear ground truth."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidSpec
from .types import SETTINGS, TASKS, ClientPartition, DatasetTable, Scenario, VerticalLayout

_METRIC_FOR_TASK = {
    "binary_classification": "auc",
    "multiclass_classification": "accuracy",
    "regression": "mse",
}


@dataclass
class SyntheticSpec:
    clients: int = 2
    features: int = 10
    rows_per_client: int = 100
    noise: float = 0.1
    task: str = "binary_classification"
    setting: str = "horizontal_cross_silo"
    num_classes: int = 2
    test_fraction: float = 0.2
    metric: str | None = None
    # vertical only: feature count per party; party 0 holds the labels
    features_per_party: list[int] = field(default_factory=list)
    name: str = "synthetic"

    def validate(self) -> None:
        if self.clients < 1:
            raise InvalidSpec("clients must be >= 1")
        if self.features < 1:
            raise InvalidSpec("features must be >= 1")
        if self.rows_per_client < 2:
            raise InvalidSpec("rows_per_client must be >= 2")
        if self.noise < 0:
            raise InvalidSpec("noise must be non-negative")
        if self.task not in TASKS:
            raise InvalidSpec(f"unknown task {self.task!r}")
        if self.setting not in SETTINGS:
            raise InvalidSpec(f"unknown setting {self.setting!r}")
        if not 0.0 < self.test_fraction < 1.0:
            raise InvalidSpec("test_fraction must be in (0, 1)")
        if self.task == "multiclass_classification" and self.num_classes < 3:
            raise InvalidSpec("multiclass needs num_classes >= 3")
        if self.setting == "vertical":
            if self.features_per_party:
                if len(self.features_per_party) != self.clients:
                    raise InvalidSpec("features_per_party needs one entry per party")
                if sum(self.features_per_party) != self.features:
                    raise InvalidSpec("features_per_party must sum to features")
                if min(self.features_per_party) < 1:
                    raise InvalidSpec("every party needs at least one feature")
            elif self.features < self.clients:
                raise InvalidSpec("vertical split needs at least one feature per party")


def _labels(z: np.ndarray, spec: SyntheticSpec) -> np.ndarray:
    if spec.task == "binary_classification":
        return (z[:, 0] > 0).astype(np.int64)
    if spec.task == "multiclass_classification":
        return z.argmax(axis=1).astype(np.int64)
    return z[:, 0].astype(np.float64)


def _split_index(n: int, frac: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    n_test = min(n - 1, max(1, int(round(frac * n))))
    perm = rng.permutation(n)
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def generate_synthetic(spec: SyntheticSpec, seed: int) -> Scenario:
    spec.validate()
    rng = np.random.default_rng(seed)
    width = spec.num_classes if spec.task == "multiclass_classification" else 1
    w = rng.normal(size=(spec.features, width))
    b = rng.normal(scale=0.1, size=width)
    metric = spec.metric or _METRIC_FOR_TASK[spec.task]

    def draw(n: int) -> tuple[np.ndarray, np.ndarray]:
        x = rng.normal(size=(n, spec.features))
        z = x @ w + b
        if spec.noise > 0:
            z = z + spec.noise * rng.normal(size=z.shape)
        return x, _labels(z, spec)

    if spec.setting == "vertical":
        n = spec.rows_per_client
        x, y = draw(n)
        ids = [f"r{i}" for i in range(n)]
        tr, te = _split_index(n, spec.test_fraction, rng)
        counts = spec.features_per_party or _even_counts(spec.features, spec.clients)
        clients, lo = [], 0
        for pid, cnt in enumerate(counts):
            cols = slice(lo, lo + cnt)
            lo += cnt
            lab_tr = y[tr] if pid == 0 else None
            lab_te = y[te] if pid == 0 else None
            clients.append(ClientPartition(
                pid,
                DatasetTable([ids[i] for i in tr], x[tr, cols], lab_tr),
                DatasetTable([ids[i] for i in te], x[te, cols], lab_te),
            ))
        layout = VerticalLayout(0, {pid: cnt for pid, cnt in enumerate(counts)})
        return Scenario(spec.name, "vertical", spec.task, metric, clients, layout,
                        num_classes=max(2, spec.num_classes))

    clients = []
    for cid in range(spec.clients):
        x, y = draw(spec.rows_per_client)
        ids = [f"c{cid}_{i}" for i in range(spec.rows_per_client)]
        tr, te = _split_index(spec.rows_per_client, spec.test_fraction, rng)
        clients.append(ClientPartition(
            cid,
            DatasetTable([ids[i] for i in tr], x[tr], y[tr]),
            DatasetTable([ids[i] for i in te], x[te], y[te]),
        ))
    return Scenario(spec.name, spec.setting, spec.task, metric, clients,
                    num_classes=max(2, spec.num_classes))


def _even_counts(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]
