"""Timestamped JSON-lines event logging.

Each process writes one file, ``<out_dir>/<agent_type>_<index>.log``.  A file
is framed by two sentinel lines and holds start/end records for dotted event
paths in between::

    {"flbenchmark": "start", "timestamp": 1653923858.0422723, "agent_type": "aggregator"}
    {"event": "training", "action": "start", "timestamp": 1653923858.04346, "metrics": {}}
    ...
    {"flbenchmark": "end", "timestamp": 1653923868.0964868}

Event paths used by the engine: ``training``, ``training.<round>``,
``computation.<round>``, ``communication.<peer>.<round>`` and
``model_evaluation``.  A line consisting only of ``...`` marks an elided
excerpt; the parser keeps it as an :class:`Elision` so that validation can
tolerate events that open before the gap and close after it.
"""

from __future__ import annotations

import json
import math
import os
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Union

from .errors import IoFailure, MalformedLine

ACTIONS = ("start", "end")
AGENT_TYPES = ("aggregator", "client")
ELISION = "..."


@dataclass(frozen=True)
class EventRecord:
    event: str
    action: str
    timestamp: float
    metrics: dict = field(default_factory=dict)

    def to_line(self) -> str:
        obj = {
            "event": self.event,
            "action": self.action,
            "timestamp": self.timestamp,
            "metrics": dict(self.metrics),
        }
        return json.dumps(obj)


@dataclass(frozen=True)
class SentinelRecord:
    flbenchmark: str
    timestamp: float
    agent_type: str | None = None

    def to_line(self) -> str:
        obj: dict = {"flbenchmark": self.flbenchmark, "timestamp": self.timestamp}
        if self.agent_type is not None:
            obj["agent_type"] = self.agent_type
        return json.dumps(obj)


@dataclass(frozen=True)
class Elision:
    lineno: int


Record = Union[EventRecord, SentinelRecord]


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def parse(line: str, lineno: int = 1) -> Record:
    """Parse one log line into a record, raising MalformedLine on any defect."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedLine(lineno, f"invalid JSON ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise MalformedLine(lineno, "not a JSON object")

    if "flbenchmark" in obj:
        kind = obj["flbenchmark"]
        if kind not in ACTIONS:
            raise MalformedLine(lineno, f"bad sentinel value {kind!r}")
        ts = obj.get("timestamp")
        if not _is_number(ts):
            raise MalformedLine(lineno, "sentinel timestamp missing or not a number")
        agent = obj.get("agent_type")
        if kind == "start" and agent not in AGENT_TYPES:
            raise MalformedLine(lineno, f"start sentinel needs agent_type, got {agent!r}")
        return SentinelRecord(kind, ts, agent)

    for key in ("event", "action", "timestamp", "metrics"):
        if key not in obj:
            raise MalformedLine(lineno, f"missing key {key!r}")
    event, action, ts, metrics = obj["event"], obj["action"], obj["timestamp"], obj["metrics"]
    if not isinstance(event, str) or not event:
        raise MalformedLine(lineno, "event must be a non-empty string")
    if action not in ACTIONS:
        raise MalformedLine(lineno, f"bad action {action!r}")
    if not _is_number(ts):
        raise MalformedLine(lineno, "timestamp must be a number")
    if not isinstance(metrics, dict) or not all(
        isinstance(k, str) and _is_number(v) for k, v in metrics.items()
    ):
        raise MalformedLine(lineno, "metrics must map strings to numbers")
    return EventRecord(event, action, ts, metrics)


def parse_lines(lines: Iterable[str]) -> list[Record | Elision]:
    out: list[Record | Elision] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line == ELISION:
            out.append(Elision(lineno))
            continue
        out.append(parse(line, lineno))
    return out


def read_log(path: str | os.PathLike) -> list[Record | Elision]:
    with open(path, encoding="utf-8") as fh:
        return parse_lines(fh)


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    num_records: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations


def validate(records: Iterable[Record | Elision]) -> ValidationReport:
    """Check sentinel framing, start/end pairing and timestamp monotonicity.

    Violations are returned as data; nothing is raised.
    """
    items = list(records)
    report = ValidationReport()
    recs = [r for r in items if not isinstance(r, Elision)]
    report.num_records = len(recs)
    v = report.violations

    sentinels = [(i, r) for i, r in enumerate(recs) if isinstance(r, SentinelRecord)]
    starts = [i for i, r in sentinels if r.flbenchmark == "start"]
    ends = [i for i, r in sentinels if r.flbenchmark == "end"]
    if not recs:
        v.append("empty log")
        return report
    if len(starts) != 1 or starts[0] != 0:
        v.append("expected exactly one start sentinel as the first record")
    if len(ends) != 1 or ends[0] != len(recs) - 1:
        v.append("expected exactly one end sentinel as the last record")

    last_ts = -math.inf
    open_count: dict[str, int] = {}
    seen_elision = False
    for item in items:
        if isinstance(item, Elision):
            seen_elision = True
            continue
        if item.timestamp < last_ts:
            v.append(f"timestamp went backwards at {item.timestamp!r}")
        last_ts = max(last_ts, item.timestamp)
        if isinstance(item, SentinelRecord):
            continue
        if item.action == "start":
            if item.metrics:
                v.append(f"start record for {item.event!r} carries metrics")
            open_count[item.event] = open_count.get(item.event, 0) + 1
        else:
            if open_count.get(item.event, 0) > 0:
                open_count[item.event] -= 1
            elif not seen_elision:
                v.append(f"end without start for {item.event!r}")
    if not seen_elision:
        for ev, n in sorted(open_count.items()):
            if n:
                v.append(f"start without end for {ev!r}")
    return report


class Logger:
    """Append-only event logger, one per process (or per in-process party).

    Lines are flushed as they are written so a crash leaves a parseable prefix.
    """

    def __init__(self, path: str | os.PathLike, agent_type: str, clock=time.time):
        if agent_type not in AGENT_TYPES:
            raise ValueError(f"agent_type must be one of {AGENT_TYPES}")
        self.path = Path(path)
        self.agent_type = agent_type
        self._clock = clock
        self._last = -math.inf
        self._lock = threading.Lock()
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "w", encoding="utf-8")
        except OSError as exc:
            raise IoFailure(str(exc)) from exc
        self._closed = False
        self._write(SentinelRecord("start", self._now(), agent_type))

    def _now(self) -> float:
        t = self._clock()
        if t < self._last:
            t = self._last
        self._last = t
        return t

    def _write(self, rec: Record) -> None:
        try:
            self._fh.write(rec.to_line() + "\n")
            self._fh.flush()
        except (OSError, ValueError) as exc:
            raise IoFailure(str(exc)) from exc

    def emit(self, event: str, action: str, metrics: dict | None = None) -> EventRecord:
        if not event:
            raise ValueError("event path must be non-empty")
        if action not in ACTIONS:
            raise ValueError(f"action must be one of {ACTIONS}")
        with self._lock:
            if self._closed:
                raise IoFailure("logger is closed")
            rec = EventRecord(event, action, self._now(), dict(metrics or {}))
            self._write(rec)
            return rec

    @contextmanager
    def span(self, event: str) -> Iterator[dict]:
        """Emit start, run the body, then emit end with whatever metrics the body filled in."""
        metrics: dict = {}
        self.emit(event, "start")
        try:
            yield metrics
        finally:
            self.emit(event, "end", metrics)

    def close(self) -> None:
        with self._lock:
            if self._closed:
                return
            self._write(SentinelRecord("end", self._now()))
            self._closed = True
            self._fh.close()

    def __enter__(self) -> "Logger":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class NullLogger:
    """Drop-in logger that records nothing."""

    agent_type = "client"

    def emit(self, event, action, metrics=None):
        return None

    @contextmanager
    def span(self, event):
        yield {}

    def close(self):
        pass


def log_path(out_dir: str | os.PathLike, agent_type: str, index: int) -> Path:
    return Path(out_dir) / f"{agent_type}_{index}.log"
