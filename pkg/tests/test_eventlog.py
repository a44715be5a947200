from __future__ import annotations

import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedbench.errors import MalformedLine
from fedbench.eventlog import (
    Elision, EventRecord, Logger, SentinelRecord, log_path, parse, parse_lines, read_log, validate,
)

REFERENCE_SAMPLE = """\
{"flbenchmark": "start", "timestamp": 1653923858.0422723, "agent_type": "aggregator"}
{"event": "training", "action": "start", "timestamp": 1653923858.04346, "metrics": {}}
{"event": "training.0", "action": "start", "timestamp": 1653923858.0435393, "metrics": {}}
{"event": "computation.0", "action": "start", "timestamp": 1653923860.8540547, "metrics": {}}
{"event": "computation.0", "action": "end", "timestamp": 1653923861.450064, "metrics": {"flop": 123, "loss": 0.8}}
{"event": "communication.1.0", "action": "start", "timestamp": 1653923861.4501162, "metrics": {}}
{"event": "communication.1.0", "action": "end", "timestamp": 1653923861.450492, "metrics": {"byte": 1234}}
{"event": "communication.2.1", "action": "start", "timestamp": 1653923861.4505105, "metrics": {}}
{"event": "communication.2.1", "action": "end", "timestamp": 1653923861.450583, "metrics": {"byte": 1234}}
{"event": "training.0", "action": "end", "timestamp": 1653923861.4505887, "metrics": {}}
{"event": "training.1", "action": "start", "timestamp": 1653923861.4506032, "metrics": {}}
...
{"event": "training.3", "action": "end", "timestamp": 1653923867.9962113, "metrics": {}}
{"event": "training", "action": "end", "timestamp": 1653923867.996218, "metrics": {}}
{"event": "model_evaluation", "action": "start", "timestamp": 1653923867.9962301, "metrics": {}}
{"event": "model_evaluation", "action": "end", "timestamp": 1653923868.0964506, "metrics": {"accuracy": 99.9}}
{"flbenchmark": "end", "timestamp": 1653923868.0964868}
"""


def test_reference_sample_parses_clean():
    items = parse_lines(REFERENCE_SAMPLE.splitlines())
    assert sum(isinstance(i, Elision) for i in items) == 1
    assert len([i for i in items if not isinstance(i, Elision)]) == 16
    report = validate(items)
    assert report.violations == []
    assert report.ok


def test_reference_sample_without_elision_reports_unmatched():
    lines = [l for l in REFERENCE_SAMPLE.splitlines() if l != "..."]
    report = validate(parse_lines(lines))
    assert not report.ok
    assert any("training.1" in v for v in report.violations)
    assert any("training.3" in v for v in report.violations)


@pytest.mark.parametrize("line,reason", [
    ("not json", "invalid JSON"),
    ("[1, 2]", "not a JSON object"),
    ('{"event": "x", "action": "middle", "timestamp": 1, "metrics": {}}', "bad action"),
    ('{"event": "x", "action": "start", "timestamp": "1", "metrics": {}}', "timestamp"),
    ('{"event": "x", "action": "end", "timestamp": 1, "metrics": {"a": "b"}}', "metrics"),
    ('{"event": "", "action": "end", "timestamp": 1, "metrics": {}}', "event"),
    ('{"action": "end", "timestamp": 1, "metrics": {}}', "missing key"),
    ('{"flbenchmark": "start", "timestamp": 1}', "agent_type"),
])
def test_malformed_lines(line, reason):
    with pytest.raises(MalformedLine) as exc:
        parse(line, 7)
    assert exc.value.lineno == 7
    assert reason in str(exc.value)


def test_validate_catches_ordering_and_start_metrics():
    lines = [
        SentinelRecord("start", 5.0, "client").to_line(),
        EventRecord("a", "start", 4.0, {"x": 1}).to_line(),
        EventRecord("a", "end", 6.0).to_line(),
        EventRecord("b", "end", 7.0).to_line(),
    ]
    v = validate(parse_lines(lines)).violations
    assert any("went backwards" in s for s in v)
    assert any("carries metrics" in s for s in v)
    assert any("end without start" in s for s in v)
    assert any("end sentinel" in s or "last" in s for s in v)


def test_logger_writes_valid_file(tmp_path):
    ticks = iter([1.0, 2.0, 1.5, 3.0, 4.0, 5.0, 6.0])
    path = log_path(tmp_path, "client", 3)
    assert path.name == "client_3.log"
    with Logger(path, "client", clock=lambda: next(ticks)) as lg:
        with lg.span("computation.0") as m:
            m["loss"] = 0.5
        lg.emit("communication.3.0", "start")
        lg.emit("communication.3.0", "end", {"byte": 11})
    items = read_log(path)
    assert validate(items).ok
    stamps = [i.timestamp for i in items]
    assert stamps == sorted(stamps)  # the backwards tick is clamped
    assert items[2].metrics == {"loss": 0.5}
    assert isinstance(items[-1], SentinelRecord) and items[-1].flbenchmark == "end"


def test_logger_line_format_matches_reference_layout(tmp_path):
    with Logger(tmp_path / "a.log", "aggregator", clock=lambda: 1653923858.0422723) as lg:
        lg.emit("training", "start")
    first, second, _ = (tmp_path / "a.log").read_text().splitlines()
    assert first == REFERENCE_SAMPLE.splitlines()[0]
    assert second == '{"event": "training", "action": "start", "timestamp": 1653923858.0422723, "metrics": {}}'


def test_crash_leaves_parseable_prefix(tmp_path):
    lg = Logger(tmp_path / "c.log", "client")
    lg.emit("computation.0", "start")
    # no close: simulate a crash
    items = read_log(tmp_path / "c.log")
    assert len(items) == 2
    assert not validate(items).ok


event_paths = st.lists(st.sampled_from(["training", "computation", "communication", "model_evaluation"])
                       .map(str) | st.integers(0, 500).map(str), min_size=1, max_size=4).map(".".join)
metric_values = st.one_of(st.integers(-2**53, 2**53), st.floats(allow_nan=False, allow_infinity=False))
records = st.builds(
    EventRecord, event_paths, st.sampled_from(["start", "end"]),
    st.floats(min_value=0, max_value=4e9, allow_nan=False),
    st.dictionaries(st.text(min_size=1, max_size=8), metric_values, max_size=4),
)


@settings(max_examples=1000, deadline=None)
@given(records)
def test_emit_parse_round_trip(rec):
    back = parse(rec.to_line())
    assert back == rec
    assert json.loads(rec.to_line())["timestamp"] == rec.timestamp


@given(st.floats(min_value=0, max_value=4e9, allow_nan=False), st.sampled_from(["aggregator", "client"]))
def test_sentinel_round_trip(ts, agent):
    s = SentinelRecord("start", ts, agent)
    assert parse(s.to_line()) == s
    e = SentinelRecord("end", ts)
    assert parse(e.to_line()) == e
    assert not math.isnan(parse(e.to_line()).timestamp)
