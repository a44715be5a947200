"""Local mini-batch SGD with classical momentum."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidSpec, NonFiniteLoss, ShapeMismatch
from ..scenario.types import DatasetTable
from .models import DenseParams, loss_and_grad


@dataclass
class TrainConfig:
    rounds: int = 30
    clients_per_round: int = 2
    local_epochs: int = 1
    batch_size: int = 32
    learning_rate: float = 0.01
    momentum: float = 0.9
    seed: int = 0

    def validate(self, total_clients: int | None = None) -> None:
        for name in ("rounds", "clients_per_round", "local_epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise InvalidSpec(f"{name} must be >= 1")
        if self.learning_rate < 0:
            raise InvalidSpec("learning_rate must be non-negative")
        if not 0 <= self.momentum < 1:
            raise InvalidSpec("momentum must be in [0, 1)")
        if total_clients is not None and self.clients_per_round > total_clients:
            raise InvalidSpec(f"clients_per_round {self.clients_per_round} > {total_clients} clients")


@dataclass
class ClientUpdate:
    client_id: int
    new_params: DenseParams
    num_samples: int
    train_loss: float


def batches(num_rows: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(num_rows)
    for lo in range(0, num_rows, batch_size):
        yield perm[lo:lo + batch_size]


class Momentum:
    """v <- mu*v - lr*g ; p <- p + v, applied per tensor."""

    def __init__(self, lr: float, mu: float):
        self.lr = lr
        self.mu = mu
        self.velocity: list[np.ndarray] | None = None

    def step(self, tensors: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self.velocity is None:
            self.velocity = [np.zeros_like(t) for t in tensors]
        for t, g, v in zip(tensors, grads, self.velocity):
            v *= self.mu
            v -= self.lr * g
            t += v


def local_train(params: DenseParams, data: DatasetTable, cfg: TrainConfig,
                client_id: int = 0) -> ClientUpdate:
    """Run ``cfg.local_epochs`` passes of mini-batch SGD over a seeded shuffle of ``data``."""
    if data.num_rows < 1:
        raise InvalidSpec("no training rows")
    if data.num_features != params.num_features:
        raise ShapeMismatch(f"data has {data.num_features} features, model expects {params.num_features}")
    p = params.copy()
    tensors = p.weights + p.biases
    opt = Momentum(cfg.learning_rate, cfg.momentum)
    rng = np.random.default_rng(cfg.seed)
    x, y = data.features, data.labels
    epoch_loss = 0.0
    for _ in range(cfg.local_epochs):
        total, seen = 0.0, 0
        for idx in batches(data.num_rows, cfg.batch_size, rng):
            loss, g = loss_and_grad(p, x[idx], y[idx])
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"client {client_id}: loss became {loss}")
            opt.step(tensors, g.weights + g.biases)
            total += loss * len(idx)
            seen += len(idx)
        epoch_loss = total / seen
    if not all(np.all(np.isfinite(t)) for t in tensors):
        raise NonFiniteLoss(f"client {client_id}: parameters diverged")
    return ClientUpdate(client_id, p, data.num_rows, epoch_loss)
