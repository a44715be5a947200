from __future__ import annotations

import numpy as np
import pytest

from fedbench.errors import ChecksumMismatch, InvalidSpec, NoCommonIds, UnknownScenario
from fedbench.scenario import (
    ClientPartition, DatasetTable, Scenario, SyntheticSpec, VerticalLayout, align_vertical, catalog,
    generate_synthetic, global_test_view, global_train_view, load_scenario,
)

# frozen partition shapes: (train rows, test rows, features) per party
FROZEN = {
    "breast_horizontal": [(227, 59, 30), (225, 58, 30)],
    "breast_vertical": [(453, 116, 10), (453, 116, 20)],
    "synthetic_horizontal": [(160, 40, 10), (160, 40, 10)],
    "synthetic_vertical": [(240, 60, 6), (240, 60, 4)],
}


def test_catalog_lists_required_scenarios():
    names = set(catalog())
    for base in ("breast", "default_credit", "give_credit", "vehicle_scale", "student"):
        assert {f"{base}_horizontal", f"{base}_vertical"} <= names
    assert "synthetic_cross_device" in names


def test_unknown_scenario():
    with pytest.raises(UnknownScenario):
        load_scenario("no_such_dataset")


@pytest.mark.parametrize("name", sorted(FROZEN))
def test_frozen_partitions(name, cache_dir):
    sc = load_scenario(name)
    assert [(c.train.num_rows, c.test.num_rows, c.train.num_features) for c in sc.clients] == FROZEN[name]
    again = load_scenario(name)
    assert again.digest() == sc.digest()


def test_breast_covers_all_rows_once(cache_dir):
    sc = load_scenario("breast_horizontal")
    ids = [i for c in sc.clients for t in (c.train, c.test) for i in t.ids]
    assert len(ids) == len(set(ids)) == 569


def test_cache_checksum_detects_tampering(cache_dir):
    load_scenario("synthetic_horizontal")
    f = cache_dir / "synthetic_horizontal" / "0_train.csv"
    f.write_text(f.read_text().replace("1", "2", 1))
    with pytest.raises(ChecksumMismatch):
        load_scenario("synthetic_horizontal")


def test_cross_device_has_many_clients(cache_dir):
    sc = load_scenario("synthetic_cross_device")
    assert sc.setting == "horizontal_cross_device"
    assert len(sc.clients) == 50


def test_synthetic_is_deterministic():
    spec = SyntheticSpec(clients=3, features=4, rows_per_client=30)
    a, b = generate_synthetic(spec, 5), generate_synthetic(spec, 5)
    assert a.digest() == b.digest()
    assert generate_synthetic(spec, 6).digest() != a.digest()


@pytest.mark.parametrize("kw", [
    dict(clients=0), dict(features=0), dict(rows_per_client=1), dict(noise=-1.0),
    dict(task="ranking"), dict(test_fraction=1.0),
    dict(task="multiclass_classification", num_classes=2),
    dict(setting="vertical", clients=3, features=2),
])
def test_synthetic_rejects_bad_spec(kw):
    with pytest.raises(InvalidSpec):
        generate_synthetic(SyntheticSpec(**kw), 0)


def _shuffled_vertical() -> Scenario:
    rng = np.random.default_rng(0)
    ids = [f"u{i}" for i in range(8)]
    x0, x1 = rng.normal(size=(8, 2)), rng.normal(size=(8, 3))
    y = np.arange(8) % 2
    p0 = ClientPartition(0, DatasetTable(ids[:6], x0[:6], y[:6]), DatasetTable(ids[6:], x0[6:], y[6:]))
    perm = [5, 3, 1, 0, 4]  # party 1 lacks u2 and holds rows in another order
    p1 = ClientPartition(1, DatasetTable([ids[i] for i in perm], x1[perm]),
                         DatasetTable(ids[6:][::-1], x1[6:][::-1]))
    return Scenario("toy", "vertical", "binary_classification", "auc", [p0, p1], VerticalLayout(0, {0: 2, 1: 3}))


def test_align_vertical_matches_ids_positionally():
    al = align_vertical(_shuffled_vertical())
    p0, p1 = al.clients
    assert p0.train.ids == p1.train.ids == ["u0", "u1", "u3", "u4", "u5"]
    assert p0.test.ids == p1.test.ids == ["u6", "u7"]
    view = global_train_view(_shuffled_vertical())
    assert view.features.shape == (5, 5)
    assert list(view.labels) == [0, 1, 1, 0, 1]


def test_align_without_common_ids():
    sc = _shuffled_vertical()
    sc.clients[1] = ClientPartition(1, DatasetTable(["z"], np.zeros((1, 3))), DatasetTable(["q"], np.zeros((1, 3))))
    with pytest.raises(NoCommonIds):
        align_vertical(sc)


def test_global_test_view_horizontal_concatenates():
    sc = generate_synthetic(SyntheticSpec(clients=3, rows_per_client=20), 1)
    view = global_test_view(sc)
    assert view.num_rows == sum(c.test.num_rows for c in sc.clients)
    assert view.ids[: sc.clients[0].test.num_rows] == sc.clients[0].test.ids


def test_partition_rejects_overlap():
    t = DatasetTable(["a"], np.zeros((1, 1)), np.zeros(1))
    with pytest.raises(ValueError):
        ClientPartition(0, t, t)
