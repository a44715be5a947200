from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedbench.engine import GBDTParams, build_histogram, compute_bin_edges, find_best_split, merge_histograms
from fedbench.engine.gbdt import (
    Tree, bin_features, fit_horizontal, fit_vertical, fixed_point_sum, gbdt_fit, masked_share, unmask_sum,
)
from fedbench.engine.models import ModelSpec
from fedbench.errors import EdgeMismatch
from fedbench.scenario import DatasetTable, global_test_view, load_scenario

from conftest import make_table, run_threads


def naive_histogram(x, g, h, edges):
    width = max(len(e) for e in edges) + 1
    grad = np.zeros((x.shape[1], width))
    hess = np.zeros_like(grad)
    cnt = np.zeros(grad.shape, dtype=np.int64)
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            b = sum(1 for e in edges[j] if x[i, j] >= e)
            grad[j, b] += g[i]
            hess[j, b] += h[i]
            cnt[j, b] += 1
    return grad, hess, cnt


def naive_best_split(grad, hess, cnt, lam):
    best, arg = 0.0, None
    for f in range(grad.shape[0]):
        gt, ht = grad[f].sum(), hess[f].sum()
        for t in range(grad.shape[1] - 1):
            gl, hl, cl = grad[f, :t + 1].sum(), hess[f, :t + 1].sum(), cnt[f, :t + 1].sum()
            cr = cnt[f].sum() - cl
            if cl == 0 or cr == 0:
                continue
            gain = 0.5 * (gl ** 2 / (hl + lam) + (gt - gl) ** 2 / (ht - hl + lam) - gt ** 2 / (ht + lam))
            if gain > best + 1e-12:
                best, arg = gain, (f, t)
    return arg, best


@pytest.mark.parametrize("seed", range(15))
def test_histogram_and_split_match_naive(seed):
    rng = np.random.default_rng(seed)
    n, f = int(rng.integers(5, 40)), int(rng.integers(1, 4))
    x = np.round(rng.normal(size=(n, f)), 1)
    g, h = rng.normal(size=n), rng.random(n) + 0.1
    edges = compute_bin_edges(x, int(rng.integers(2, 9)))
    hist = build_histogram(DatasetTable([str(i) for i in range(n)], x), g, h, edges)
    grad, hess, cnt = naive_histogram(x, g, h, edges)
    assert np.allclose(hist.grad, grad, atol=1e-12) and np.allclose(hist.hess, hess, atol=1e-12)
    assert np.array_equal(hist.count, cnt)
    split = find_best_split(hist, 1.0)
    arg, gain = naive_best_split(grad, hess, cnt, 1.0)
    if arg is None:
        assert split is None
    else:
        assert (split.feature, split.bin) == arg
        assert split.gain == pytest.approx(gain, rel=1e-9)


def test_bins_follow_left_inclusive_threshold_rule():
    x = np.array([[0.0], [1.0], [2.0], [3.0]])
    edges = [np.array([1.0, 2.5])]
    assert bin_features(x, edges)[:, 0].tolist() == [0, 1, 1, 2]
    # bin <= t goes left, which is x < edges[t]
    assert ((bin_features(x, edges)[:, 0] <= 0) == (x[:, 0] < 1.0)).all()


def test_merge_rejects_mismatched_edges():
    rng = np.random.default_rng(0)
    t = make_table(rng, 10, 2)
    a = build_histogram(t, np.ones(10), np.ones(10), compute_bin_edges(t.features, 4))
    b = build_histogram(t, np.ones(10), np.ones(10), compute_bin_edges(t.features * 2, 4))
    with pytest.raises(EdgeMismatch):
        merge_histograms([a, b])


@pytest.mark.parametrize("seed", range(10))
def test_two_client_trees_equal_pooled_trees(seed):
    rng = np.random.default_rng(seed)
    task = "regression" if seed % 3 == 2 else "binary"
    a = make_table(rng, int(rng.integers(30, 80)), 4, task, prefix="a")
    b = make_table(rng, int(rng.integers(30, 80)), 4, task, prefix="b")
    pooled = DatasetTable(a.ids + b.ids, np.vstack([a.features, b.features]), np.concatenate([a.labels, b.labels]))
    params = GBDTParams(num_trees=4, num_bins=16, max_depth=3)
    edges = compute_bin_edges(pooled.features, params.num_bins)
    nc = 1 if task == "regression" else 2
    fed = fit_horizontal([a, b], task, nc, params, bin_edges=edges)
    cen = fit_horizontal([pooled], task, nc, params, bin_edges=edges)
    assert len(fed.trees) == len(cen.trees)
    for tf, tc in zip(fed.trees, cen.trees):
        assert tf.split_sequence() == tc.split_sequence()
        wf, wc = tf.leaf_weights(), tc.leaf_weights()
        assert wf.keys() == wc.keys()
        assert all(abs(wf[k] - wc[k]) <= 1e-9 for k in wf)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**31 - 1))
def test_masked_shares_sum_to_fixed_point_total(parties, seed):
    rng = np.random.default_rng(seed)
    vals = [rng.normal(scale=100.0, size=(3, 4)) for _ in range(parties)]
    shares = [masked_share(v, i, parties, seed) for i, v in enumerate(vals)]
    total = unmask_sum(shares)
    assert np.allclose(total, sum(vals), atol=parties * 2 ** -32)
    # a single share reveals nothing close to its plaintext
    assert not np.allclose(shares[0].astype(float) / 2 ** 32, vals[0], atol=1.0)


def test_masked_merge_equals_fixed_point_merge():
    rng = np.random.default_rng(5)
    t = make_table(rng, 40, 3)
    edges = compute_bin_edges(t.features, 8)
    parts = [build_histogram(t.take(np.arange(i, 40, 3)), rng.normal(size=len(range(i, 40, 3))),
                             rng.random(len(range(i, 40, 3))), edges) for i in range(3)]
    masked = merge_histograms(parts, mask_seed=17)
    exact = fixed_point_sum(parts)
    assert np.array_equal(masked.grad, exact.grad) and np.array_equal(masked.hess, exact.hess)
    assert np.allclose(masked.grad, merge_histograms(parts).grad, atol=1e-8)


def test_ensemble_predicts_training_raw():
    rng = np.random.default_rng(2)
    t = make_table(rng, 60, 3)
    ens = fit_horizontal([t], "binary", 2, GBDTParams(num_trees=3, num_bins=8, max_depth=2))
    p = ens.predict(t.features)
    assert p.shape == (60,) and ((p > 0) & (p < 1)).all()
    rec = ens.trees[0].to_record()
    back = Tree.from_record(rec)
    assert np.array_equal(back.predict_raw(t.features), ens.trees[0].predict_raw(t.features))


def test_multiclass_grows_one_tree_per_class():
    rng = np.random.default_rng(4)
    t = make_table(rng, 50, 3, "multiclass", 3)
    ens = fit_horizontal([t], "multiclass", 3, GBDTParams(num_trees=2, num_bins=8, max_depth=2))
    assert [tr.output for tr in ens.trees] == [0, 1, 2, 0, 1, 2]
    assert np.allclose(ens.predict(t.features).sum(axis=1), 1.0)


def test_vertical_fit_equals_centralized_trees():
    rng = np.random.default_rng(8)
    t = make_table(rng, 80, 5)
    params = GBDTParams(num_trees=3, num_bins=8, max_depth=3)
    ens, parties = fit_vertical([t.features[:, :2], t.features[:, 2:]], t.labels, "binary", 2, params)
    # per-party edges equal joint edges because binning is per feature
    cen = fit_horizontal([t], "binary", 2, params)
    for a, b in zip(ens.trees, cen.trees):
        assert a.split_sequence() == b.split_sequence()
    assert np.allclose(ens.predict(t.features), cen.predict(t.features), atol=1e-12)
    owned = {owner for tr in ens.trees for n in tr.nodes if not n.is_leaf for owner in [n.owner]}
    assert owned <= {0, 1}
    assert sum(len(p.owned) for p in parties) == sum(len(tr.split_sequence()) for tr in ens.trees)


def _gbdt_raw(scenario, algorithm, masking=False):
    return {"scenario": scenario, "algorithm": algorithm, "hist_masking": masking,
            "model": {"kind": "gbdt", "gbdt": {"num_trees": 3, "num_bins": 16, "max_depth": 3}}}


@pytest.mark.parametrize("masking", [False, True])
def test_networked_histsecagg_equals_in_memory(masking, tmp_path, cache_dir):
    out = run_threads(_gbdt_raw("synthetic_horizontal", "histsecagg_gbdt", masking), tmp_path)
    sc = load_scenario("synthetic_horizontal")
    spec = ModelSpec("gbdt", gbdt_params=GBDTParams(num_trees=3, num_bins=16, max_depth=3))
    want = gbdt_fit(sc, spec, "horizontal_histsecagg", mask_seed=1 if masking else None)
    got = out["model"]
    for a, b in zip(got.trees, want.trees, strict=True):
        assert a.split_sequence() == b.split_sequence()
        assert all(abs(a.leaf_weights()[k] - v) <= 1e-9 for k, v in b.leaf_weights().items())
    test = global_test_view(sc)
    assert np.allclose(got.predict(test.features), want.predict(test.features), atol=1e-9)


def test_networked_vertical_gbdt_equals_in_memory(tmp_path, cache_dir):
    out = run_threads(_gbdt_raw("synthetic_vertical", "vertical_gbdt"), tmp_path)
    sc = load_scenario("synthetic_vertical")
    spec = ModelSpec("gbdt", gbdt_params=GBDTParams(num_trees=3, num_bins=16, max_depth=3))
    want = gbdt_fit(sc, spec, "vertical_secureboost_plain")
    got = out["model"]
    for a, b in zip(got.trees, want.trees, strict=True):
        assert a.split_sequence() == b.split_sequence()
        assert all(abs(a.leaf_weights()[k] - v) <= 1e-9 for k, v in b.leaf_weights().items())
    test = global_test_view(sc)
    from fedbench.scenario import auc_score

    assert out["auc"] == pytest.approx(100 * auc_score(want.predict(test.features), test.labels), abs=1e-9)
    # thresholds of client-owned splits stay with the client
    assert any(np.isnan(n.threshold) for t in got.trees for n in t.nodes if not n.is_leaf and n.owner != 0)
