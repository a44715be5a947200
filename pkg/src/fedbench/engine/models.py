"""Dense models (linear/logistic regression, ReLU MLP) written directly in numpy."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidSpec, ShapeMismatch

MODEL_KINDS = ("logistic_regression", "linear_regression", "mlp", "gbdt")


@dataclass
class GBDTParams:
    num_trees: int = 64
    num_bins: int = 64
    max_depth: int = 6
    learning_rate: float = 0.1
    lam: float = 1.0
    min_gain: float = 0.0

    def validate(self) -> None:
        if self.num_trees < 1:
            raise InvalidSpec("num_trees must be >= 1")
        if self.num_bins < 2:
            raise InvalidSpec("num_bins must be >= 2")
        if self.max_depth < 1:
            raise InvalidSpec("max_depth must be >= 1")
        if self.lam < 0:
            raise InvalidSpec("lambda must be non-negative")


@dataclass
class ModelSpec:
    kind: str
    hidden_layers: list[int] = field(default_factory=list)
    gbdt_params: GBDTParams = field(default_factory=GBDTParams)

    def validate(self) -> None:
        if self.kind not in MODEL_KINDS:
            raise InvalidSpec(f"unknown model kind {self.kind!r}")
        if self.kind == "mlp" and not self.hidden_layers:
            raise InvalidSpec("mlp needs at least one hidden layer")
        if self.kind != "mlp" and self.hidden_layers:
            raise InvalidSpec("hidden_layers only apply to mlp")
        if any(w < 1 for w in self.hidden_layers):
            raise InvalidSpec("hidden layer widths must be >= 1")
        if self.kind == "gbdt":
            self.gbdt_params.validate()

    @property
    def name(self) -> str:
        if self.kind == "mlp":
            return "mlp_" + "_".join(str(w) for w in self.hidden_layers)
        if self.kind == "gbdt":
            p = self.gbdt_params
            return f"gbdt_{p.num_trees}_{p.num_bins}_{p.max_depth}"
        return self.kind


def parse_model_name(name: str) -> ModelSpec:
    """Turn benchmark model names such as ``mlp_128_128_128`` or ``gbdt_64_64_6`` into a spec.

    For ``gbdt_T_B_D`` the fields are trees, histogram bins and max depth.
    """
    if name in ("logistic_regression", "linear_regression"):
        return ModelSpec(name)
    m = re.fullmatch(r"mlp((?:_\d+)+)", name)
    if m:
        return ModelSpec("mlp", [int(w) for w in m.group(1).strip("_").split("_")])
    m = re.fullmatch(r"gbdt_(\d+)_(\d+)_(\d+)", name)
    if m:
        t, b, d = (int(v) for v in m.groups())
        return ModelSpec("gbdt", gbdt_params=GBDTParams(num_trees=t, num_bins=b, max_depth=d))
    raise InvalidSpec(f"unrecognized model name {name!r}")


def output_task(num_classes: int) -> str:
    if num_classes <= 1:
        return "regression"
    return "binary" if num_classes == 2 else "multiclass"


@dataclass
class DenseParams:
    """Layer weights; weights[i] has shape (fan_in, fan_out)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    task: str  # binary | multiclass | regression

    @property
    def shapes(self) -> list[tuple[int, int]]:
        return [w.shape for w in self.weights]

    @property
    def num_features(self) -> int:
        return self.weights[0].shape[0]

    def flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.reshape(-1))
            parts.append(b.reshape(-1))
        return np.concatenate(parts)

    def with_flat(self, vec: np.ndarray) -> "DenseParams":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.size,):
            raise ShapeMismatch(f"flat vector of length {vec.shape} for model of size {self.size}")
        ws, bs, off = [], [], 0
        for fi, fo in self.shapes:
            ws.append(vec[off:off + fi * fo].reshape(fi, fo).copy())
            off += fi * fo
            bs.append(vec[off:off + fo].copy())
            off += fo
        return DenseParams(ws, bs, self.task)

    @property
    def size(self) -> int:
        return sum(fi * fo + fo for fi, fo in self.shapes)

    def copy(self) -> "DenseParams":
        return DenseParams([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.task)

    def congruent(self, other: "DenseParams") -> bool:
        return self.shapes == other.shapes and self.task == other.task


def init_model(spec: ModelSpec, num_features: int, num_classes: int, seed: int):
    """Fresh parameters: zeros for regression models, Glorot-uniform weights for MLPs.

    GBDT models start as an empty ensemble.
    """
    spec.validate()
    if num_features < 1:
        raise InvalidSpec("num_features must be >= 1")
    task = output_task(num_classes)
    out = num_classes if task == "multiclass" else 1
    if spec.kind == "gbdt":
        from .gbdt import TreeEnsemble

        return TreeEnsemble(task=task, num_classes=num_classes, params=spec.gbdt_params)
    if spec.kind == "linear_regression" and task != "regression":
        raise InvalidSpec("linear_regression is for regression tasks")
    if spec.kind == "logistic_regression" and task == "regression":
        raise InvalidSpec("logistic_regression is for classification tasks")
    widths = [num_features] + list(spec.hidden_layers) + [out]
    rng = np.random.default_rng(seed)
    ws, bs = [], []
    for fi, fo in zip(widths[:-1], widths[1:]):
        if spec.kind == "mlp":
            limit = np.sqrt(6.0 / (fi + fo))
            ws.append(rng.uniform(-limit, limit, size=(fi, fo)))
        else:
            ws.append(np.zeros((fi, fo)))
        bs.append(np.zeros(fo))
    return DenseParams(ws, bs, task)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _log_sigmoid(z: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -z)


def forward(params: DenseParams, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Output-layer pre-activations and the list of layer inputs (for backprop)."""
    acts = [x]
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        if i < last:
            h = np.maximum(z, 0.0)
            acts.append(h)
        else:
            return z, acts
    raise AssertionError("unreachable")


def output_loss(z: np.ndarray, y: np.ndarray, task: str) -> tuple[float, np.ndarray]:
    """Mean loss and its gradient with respect to the output pre-activations z."""
    n = z.shape[0]
    if task == "binary":
        zz = z[:, 0]
        yy = y.astype(np.float64)
        loss = -np.mean(yy * _log_sigmoid(zz) + (1.0 - yy) * _log_sigmoid(-zz))
        dz = ((_sigmoid(zz) - yy) / n)[:, None]
    elif task == "multiclass":
        zmax = z.max(axis=1, keepdims=True)
        logp = z - zmax - np.log(np.exp(z - zmax).sum(axis=1, keepdims=True))
        idx = y.astype(np.int64)
        loss = -np.mean(logp[np.arange(n), idx])
        dz = np.exp(logp)
        dz[np.arange(n), idx] -= 1.0
        dz /= n
    else:
        diff = z[:, 0] - y.astype(np.float64)
        loss = np.mean(diff ** 2)
        dz = (2.0 * diff / n)[:, None]
    return float(loss), dz


def loss_and_grad(params: DenseParams, x: np.ndarray, y: np.ndarray) -> tuple[float, DenseParams]:
    z, acts = forward(params, x)
    loss, dz = output_loss(z, y, params.task)
    gw: list[np.ndarray] = [None] * len(params.weights)  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * len(params.weights)  # type: ignore[list-item]
    delta = dz
    for i in range(len(params.weights) - 1, -1, -1):
        gw[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.weights[i].T) * (acts[i] > 0)
    return loss, DenseParams(gw, gb, params.task)


def loss_value(params: DenseParams, x: np.ndarray, y: np.ndarray) -> float:
    z, _ = forward(params, x)
    return output_loss(z, y, params.task)[0]


def link(z: np.ndarray, task: str) -> np.ndarray:
    if task == "binary":
        return _sigmoid(z[:, 0] if z.ndim == 2 else z)
    if task == "multiclass":
        return _softmax(z)
    return z[:, 0] if z.ndim == 2 else z


def predict(params, features: np.ndarray) -> np.ndarray:
    """Scores for each row: probability (binary), class scores (multiclass) or raw value."""
    features = np.asarray(features, dtype=np.float64)
    if isinstance(params, DenseParams):
        if features.ndim != 2 or features.shape[1] != params.num_features:
            raise ShapeMismatch(f"expected {params.num_features} features, got shape {features.shape}")
        z, _ = forward(params, features)
        return link(z, params.task)
    return params.predict(features)
