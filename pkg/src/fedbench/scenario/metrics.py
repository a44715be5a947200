"""Task metrics: accuracy, AUC (average-rank convention) and MSE."""

from __future__ import annotations

import numpy as np

from ..errors import DegenerateAUC, LengthMismatch


def average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with tied values sharing the mean of their positions."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    n = len(xs)
    ranks = np.empty(n, dtype=np.float64)
    boundaries = np.flatnonzero(np.diff(xs) != 0) + 1
    starts = np.concatenate(([0], boundaries))
    stops = np.concatenate((boundaries, [n]))
    for lo, hi in zip(starts, stops):
        # positions lo..hi-1 -> ranks lo+1..hi, mean (lo+1+hi)/2
        ranks[order[lo:hi]] = (lo + 1 + hi) / 2.0
    return ranks


def auc_score(scores, labels) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateAUC("AUC needs both classes present")
    ranks = average_ranks(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def evaluate(predictions, labels, metric: str) -> float:
    """Score predictions against labels.

    ``predictions`` is a vector of probabilities/values, or a (rows, classes)
    score matrix for multiclass accuracy.
    """
    preds = np.asarray(predictions, dtype=np.float64)
    labels = np.asarray(labels)
    if preds.shape[0] != labels.shape[0]:
        raise LengthMismatch(f"{preds.shape[0]} predictions vs {labels.shape[0]} labels")
    if labels.shape[0] < 1:
        raise LengthMismatch("need at least one prediction")
    if metric == "accuracy":
        if preds.ndim == 2:
            guess = preds.argmax(axis=1)
        else:
            guess = (preds >= 0.5).astype(np.int64)
        return float(np.mean(guess == labels.astype(np.int64)))
    if metric == "auc":
        if preds.ndim == 2:
            preds = preds[:, -1]
        return auc_score(preds, labels)
    if metric == "mse":
        return float(np.mean((preds.reshape(-1) - labels.astype(np.float64)) ** 2))
    raise ValueError(f"unknown metric {metric!r}")
