"""Plaintext vertical linear/logistic regression.

Each party keeps the weights for its own feature block.  Per batch, every
party sends its partial scores to the label party, which adds the bias,
computes output residuals and sends them back; each party then steps its own
block with momentum SGD.  Without encryption the arithmetic is the same as
centralized regression on the joined features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import AlignmentError
from .models import link, output_loss
from .sgd import Momentum


@dataclass
class VerticalParty:
    party_id: int
    features: np.ndarray
    weights: np.ndarray           # (block_features, outputs)
    bias: np.ndarray | None = None  # label party only
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.opt = Momentum(0.0, 0.0)

    @property
    def holds_labels(self) -> bool:
        return self.labels is not None

    def configure(self, lr: float, momentum: float) -> None:
        self.opt = Momentum(lr, momentum)

    def partial(self, rows: np.ndarray, features: np.ndarray | None = None) -> np.ndarray:
        x = self.features if features is None else features
        return x[rows] @ self.weights

    def residuals(self, rows: np.ndarray, partials: list[np.ndarray], task: str) -> tuple[float, np.ndarray]:
        """Label party: combine partial scores, return (loss, d loss / d score)."""
        z = self.bias + sum(partials[1:], partials[0])
        return output_loss(z, self.labels[rows], task)

    def apply(self, rows: np.ndarray, resid: np.ndarray) -> None:
        grads = [self.features[rows].T @ resid]
        tensors = [self.weights]
        if self.bias is not None:
            grads.append(resid.sum(axis=0))
            tensors.append(self.bias)
        self.opt.step(tensors, grads)

    def flat(self) -> np.ndarray:
        parts = [self.weights.reshape(-1)]
        if self.bias is not None:
            parts.append(self.bias)
        return np.concatenate(parts)


def make_parties(blocks: list[np.ndarray], labels: np.ndarray, outputs: int,
                 label_party: int = 0) -> list[VerticalParty]:
    n = blocks[0].shape[0]
    if any(b.shape[0] != n for b in blocks) or labels.shape[0] != n:
        raise AlignmentError("party blocks are not row-aligned")
    parties = []
    for pid, b in enumerate(blocks):
        own = pid == label_party
        parties.append(VerticalParty(pid, b, np.zeros((b.shape[1], outputs)),
                                     np.zeros(outputs) if own else None, labels if own else None))
    return parties


def vertical_regression_step(parties: list[VerticalParty], batch: np.ndarray, task: str) -> float:
    """One batch of the partial-score / residual exchange; returns the batch loss."""
    label = [p for p in parties if p.holds_labels]
    if len(label) != 1:
        raise AlignmentError("exactly one party must hold labels")
    n = parties[0].features.shape[0]
    if any(p.features.shape[0] != n for p in parties):
        raise AlignmentError("party blocks are not row-aligned")
    partials = [p.partial(batch) for p in parties]
    loss, resid = label[0].residuals(batch, partials, task)
    for p in parties:
        p.apply(batch, resid)
    return loss


def vertical_predict(parties: list[VerticalParty], blocks: list[np.ndarray], task: str) -> np.ndarray:
    rows = np.arange(blocks[0].shape[0])
    partials = [p.partial(rows, b) for p, b in zip(parties, blocks)]
    label = next(p for p in parties if p.holds_labels)
    return link(label.bias + sum(partials[1:], partials[0]), task)
