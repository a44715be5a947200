from __future__ import annotations

import hashlib
import json

import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from fedbench.analyzer import analyze, analyze_repeat, breakdown, compare, load_report, write_report
from fedbench.analyzer.report import mean_std
from fedbench.errors import CorruptLog, IncomparableScenarios, MissingAggregatorLog
from fedbench.eventlog import Logger

from test_eventlog import REFERENCE_SAMPLE


class Clock:
    def __init__(self, t: float = 1000.0):
        self.t = t

    def __call__(self) -> float:
        return self.t


def write_party(path, agent, script, clock):
    """``script`` is a list of (advance_seconds, event, action, metrics)."""
    with Logger(path, agent, clock=clock) as lg:
        for dt, ev, act, m in script:
            clock.t += dt
            lg.emit(ev, act, m)


def simple_repeat(d, total=10.0, server=2.0, client=5.0, metric=("auc", 90.0), byte=1234, mem=None):
    d.mkdir(parents=True, exist_ok=True)
    c = Clock()
    rest = total - server
    write_party(d / "aggregator_0.log", "aggregator", [
        (0, "training", "start", None),
        (0, "training.0", "start", None),
        (rest / 2, "communication.1.0", "start", None),
        (0, "communication.1.0", "end", {"byte": byte}),
        (0, "computation.0", "start", None),
        (server, "computation.0", "end", {"loss": 0.3}),
        (0, "communication.1.1", "start", None),
        (0, "communication.1.1", "end", {"byte": byte}),
        (rest / 2, "training.0", "end", None),
        (0, "training", "end", None),
        (0, "model_evaluation", "start", None),
        (0.5, "model_evaluation", "end", {metric[0]: metric[1]}),
    ], c)
    c2 = Clock()
    write_party(d / "client_1.log", "client", [
        (0, "computation.0", "start", None),
        (client, "computation.0", "end", None),
    ], c2)
    rows = mem or [(1.0, 11, 100), (1.0, 12, 50), (2.0, 11, 120), (2.0, 12, 60), (3.0, 11, 10), (3.0, 12, 0)]
    (d / "memory.csv").write_text("timestamp,pid,rss_bytes\n" + "".join(f"{t!r},{p},{r}\n" for t, p, r in rows))
    return d


def test_breakdown_identity_small_example(tmp_path):
    r = analyze_repeat(simple_repeat(tmp_path / "repeat_0"))
    s = r["system"]
    assert s["total_training_time_s"] == pytest.approx(10.0, abs=1e-9)
    assert s["server_computation_time_s"] == pytest.approx(2.0, abs=1e-9)
    assert s["client_computation_time_s"] == pytest.approx(5.0, abs=1e-9)
    assert s["other_cost_s"] == pytest.approx(3.0, abs=1e-9)
    assert s["communication_rounds"] == 2
    assert s["communication_bytes"] == 2468
    assert s["peak_memory_bytes"] == 180
    assert r["peak_memory_per_pid"] == {"11": 120, "12": 60}
    assert (r["metric"], r["value"]) == ("auc", 90.0)


def test_published_breakdown_row():
    row = breakdown(578.30, 94.14, 224.99)
    assert abs(row["other_cost_s"] - 259.17) <= 0.02


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1e4), st.floats(0, 1e4), st.floats(0, 1e4))
def test_breakdown_identity_property(total, server, client):
    row = breakdown(total, server, client)
    assert row["client_computation_time_s"] + row["server_computation_time_s"] + row["other_cost_s"] == \
        pytest.approx(row["total_training_time_s"], rel=1e-12, abs=1e-9)


def test_reference_sample_counts(tmp_path):
    (tmp_path / "aggregator_0.log").write_text(REFERENCE_SAMPLE)
    r = analyze_repeat(tmp_path)
    s = r["system"]
    assert s["communication_bytes"] == 2468 and s["communication_rounds"] == 2
    assert s["total_training_time_s"] == pytest.approx(1653923867.996218 - 1653923858.04346)
    assert s["server_computation_time_s"] == pytest.approx(1653923861.450064 - 1653923860.8540547)
    assert (r["metric"], r["value"]) == ("accuracy", 99.9)


def test_report_over_repeats(tmp_path):
    run = tmp_path / "run1"
    for i, (v, tot) in enumerate([(90.0, 10.0), (92.0, 12.0), (94.0, 14.0)]):
        simple_repeat(run / f"repeat_{i}", total=tot, metric=("auc", v))
    (run / "config.yaml").write_text(yaml.safe_dump({"scenario": "s", "engine": "reference",
                                                    "algorithm": "fedavg", "model": {"kind": "mlp",
                                                                                     "hidden_layers": [8]}}))
    rep = analyze(run)
    assert rep.model_perf["mean"] == pytest.approx(92.0)
    assert rep.model_perf["std"] == pytest.approx(2.0)  # sample std
    sp = rep.system_perf
    assert sp["total_training_time_s"] == pytest.approx(12.0)
    assert sp["other_cost_s"] == sp["total_training_time_s"] - sp["server_computation_time_s"] - \
        sp["client_computation_time_s"]
    assert rep.provenance["model"] == "mlp_8" and len(rep.provenance["config_hash"]) == 16
    path = write_report(rep, run)
    assert load_report(path).to_dict() == json.loads(json.dumps(rep.to_dict()))
    text = rep.to_text()
    assert "92.00±2.00" in text and "other_cost_s" in text


def test_single_repeat_std_is_zero():
    assert mean_std([5.0]) == (5.0, 0.0)
    assert mean_std([]) == (None, 0.0)


def test_unpaired_start_warns_and_counts_zero(tmp_path):
    d = simple_repeat(tmp_path / "r")
    with open(d / "client_1.log", "a") as fh:
        fh.write('{"event": "computation.1", "action": "start", "timestamp": 2000.0, "metrics": {}}\n')
    r = analyze_repeat(d)
    assert r["system"]["client_computation_time_s"] == pytest.approx(5.0)
    assert any("unpaired" in w for w in r["warnings"])


def test_missing_and_corrupt_logs(tmp_path):
    d = tmp_path / "r"
    d.mkdir()
    (d / "client_1.log").write_text('{"flbenchmark": "start", "timestamp": 1, "agent_type": "client"}\n')
    with pytest.raises(MissingAggregatorLog):
        analyze_repeat(d)
    (d / "aggregator_0.log").write_text("garbage\n")
    with pytest.raises(CorruptLog):
        analyze_repeat(d)
    with pytest.raises(MissingAggregatorLog):
        analyze(tmp_path / "empty")


def test_analysis_is_pure(tmp_path):
    d = simple_repeat(tmp_path / "run" / "repeat_0")

    def snapshot():
        return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in d.parent.rglob("*") if p.is_file()}

    before = snapshot()
    a = analyze(d.parent).to_dict()
    b = analyze(d.parent).to_dict()
    assert a == b and snapshot() == before


def _run(tmp_path, name, cfg, **kw):
    run = tmp_path / name
    simple_repeat(run / "repeat_0", **kw)
    (run / "config.yaml").write_text(yaml.safe_dump(cfg))
    return analyze(run)


def test_compare_marks_best_and_ties(tmp_path):
    base = {"scenario": "s", "engine": "reference", "algorithm": "fedavg", "model": "m1"}
    a = _run(tmp_path, "a", base, total=10.0, metric=("auc", 95.0))
    b = _run(tmp_path, "b", {**base, "model": "m2"}, total=20.0, metric=("auc", 97.0))
    c = _run(tmp_path, "c", {**base, "model": "m3"}, total=10.0, metric=("auc", 90.0), byte=1)
    table = compare([a, b, c])
    best = table.best
    assert len(best["total_training_time_s"]) == 2  # tie: both marked
    assert best["model"] == [table.rows[1].label]
    assert best["communication_bytes"] == [table.rows[2].label]
    assert table.note == "no dominator: no row is best in every column"
    text = table.to_text()
    assert text.count(" *") >= 5
    assert table.to_csv().splitlines()[0].startswith("label,repeats,model_mean")


def test_compare_folds_same_config(tmp_path):
    cfg = {"scenario": "s", "engine": "reference", "algorithm": "fedavg", "model": "m1"}
    a = _run(tmp_path, "a", cfg, metric=("auc", 90.0))
    b = _run(tmp_path, "b", cfg, metric=("auc", 94.0))
    other = _run(tmp_path, "c", {**cfg, "model": "m2"}, metric=("auc", 80.0), total=100.0, byte=9999)
    table = compare([a, b, other])
    assert len(table.rows) == 2
    assert table.rows[0].values["model"] == pytest.approx(92.0) and table.rows[0].repeats == 2
    assert table.dominators == [table.rows[0].label] and table.note is None


def test_compare_rejects_mixed_scenarios(tmp_path):
    a = _run(tmp_path, "a", {"scenario": "s1", "model": "m"})
    b = _run(tmp_path, "b", {"scenario": "s2", "model": "m"})
    with pytest.raises(IncomparableScenarios):
        compare([a, b])
    with pytest.raises(ValueError):
        compare([a])
