from __future__ import annotations

import numpy as np
import pytest

from fedbench.engine import GBDTParams, ModelSpec, init_model, load_model, loss_and_grad, parse_model_name, predict, save_model
from fedbench.engine.models import loss_value
from fedbench.errors import InvalidSpec, ShapeMismatch

EPS = 1e-6


def numeric_grad(params, x, y) -> np.ndarray:
    flat = params.flat()
    out = np.empty_like(flat)
    for i in range(flat.size):
        up, down = flat.copy(), flat.copy()
        up[i] += EPS
        down[i] -= EPS
        out[i] = (loss_value(params.with_flat(up), x, y) - loss_value(params.with_flat(down), x, y)) / (2 * EPS)
    return out


def _instance(seed: int):
    rng = np.random.default_rng(seed)
    kind = ["logistic_regression", "mlp"][seed % 2]
    classes = [2, 2, 3][seed % 3] if kind == "mlp" else 2
    f = int(rng.integers(2, 6))
    spec = ModelSpec(kind, [int(w) for w in rng.integers(2, 6, size=int(rng.integers(1, 3)))] if kind == "mlp" else [])
    params = init_model(spec, f, classes, seed)
    # perturb so that logistic weights are not all zero
    params = params.with_flat(params.flat() + 0.3 * rng.normal(size=params.size))
    n = int(rng.integers(3, 12))
    x = rng.normal(size=(n, f))
    y = rng.integers(0, classes, size=n)
    return params, x, y


@pytest.mark.parametrize("seed", range(50))
def test_gradient_matches_central_differences(seed):
    params, x, y = _instance(seed)
    _, g = loss_and_grad(params, x, y)
    analytic = g.flat()
    numeric = numeric_grad(params, x, y)
    rel = np.linalg.norm(analytic - numeric) / max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12)
    assert rel < 1e-4


def test_regression_gradient():
    rng = np.random.default_rng(3)
    params = init_model(ModelSpec("linear_regression"), 4, 1, 0)
    params = params.with_flat(rng.normal(size=params.size))
    x, y = rng.normal(size=(9, 4)), rng.normal(size=9)
    _, g = loss_and_grad(params, x, y)
    assert np.allclose(g.flat(), numeric_grad(params, x, y), rtol=1e-5, atol=1e-8)


@pytest.mark.parametrize("name,kind,layers", [
    ("mlp_128_128_128", "mlp", [128, 128, 128]),
    ("mlp_32", "mlp", [32]),
    ("logistic_regression", "logistic_regression", []),
])
def test_parse_model_name(name, kind, layers):
    spec = parse_model_name(name)
    assert (spec.kind, spec.hidden_layers, spec.name) == (kind, layers, name)


def test_parse_gbdt_name():
    spec = parse_model_name("gbdt_64_64_6")
    assert spec.gbdt_params == GBDTParams(num_trees=64, num_bins=64, max_depth=6)


@pytest.mark.parametrize("name", ["mlp", "mlp_", "cnn_3", "gbdt_1_2"])
def test_bad_model_names(name):
    with pytest.raises(InvalidSpec):
        parse_model_name(name)


def test_init_shapes_and_determinism():
    spec = parse_model_name("mlp_8_4")
    a = init_model(spec, 5, 3, 1)
    assert a.shapes == [(5, 8), (8, 4), (4, 3)]
    assert np.array_equal(a.flat(), init_model(spec, 5, 3, 1).flat())
    lr = init_model(parse_model_name("logistic_regression"), 5, 2, 1)
    assert not lr.flat().any()


def test_predict_ranges_and_shape_check():
    params = init_model(parse_model_name("mlp_4"), 3, 3, 0)
    x = np.random.default_rng(0).normal(size=(6, 3))
    p = predict(params, x)
    assert p.shape == (6, 3) and np.allclose(p.sum(axis=1), 1.0)
    with pytest.raises(ShapeMismatch):
        predict(params, x[:, :2])


def test_checkpoint_round_trip(tmp_path):
    spec = parse_model_name("mlp_4_3")
    params = init_model(spec, 3, 2, 9)
    save_model(tmp_path / "m.json", spec, params)
    spec2, params2 = load_model(tmp_path / "m.json")
    assert spec2.name == spec.name
    assert np.array_equal(params2.flat(), params.flat())
