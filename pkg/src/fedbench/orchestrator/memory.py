"""Resident-set sampling of run processes."""

from __future__ import annotations

import csv
import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import psutil

from ..errors import InvalidSpec

log = logging.getLogger(__name__)


@dataclass
class MemorySample:
    timestamp: float
    rss: dict[int, int] = field(default_factory=dict)  # pid -> bytes

    @property
    def total(self) -> int:
        return sum(self.rss.values())


def read_rss(pids: list[int]) -> tuple[MemorySample, list[int]]:
    """One reading; returns the sample and the pids that have gone away."""
    sample = MemorySample(time.time())
    gone = []
    for pid in pids:
        try:
            sample.rss[pid] = psutil.Process(pid).memory_info().rss
        except (psutil.NoSuchProcess, psutil.ZombieProcess, psutil.AccessDenied):
            sample.rss[pid] = 0
            gone.append(pid)
    return sample, gone


class MemorySampler:
    """Background thread writing ``timestamp,pid,rss_bytes`` rows every ``interval_ms``.

    A pid that disappears is recorded as 0 from then on and noted in ``gone``.
    """

    def __init__(self, path: str | Path, pids: list[int], interval_ms: int = 100):
        if interval_ms < 10:
            raise InvalidSpec("sampling interval must be >= 10 ms")
        self.path = Path(path)
        self.pids = list(pids)
        self.interval = interval_ms / 1000.0
        self.gone: set[int] = set()
        self.samples: list[MemorySample] = []
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._loop, name="memory-sampler", daemon=True)

    def add(self, pid: int) -> None:
        self.pids.append(pid)

    def start(self) -> "MemorySampler":
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._thread.start()
        return self

    def _loop(self) -> None:
        with open(self.path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["timestamp", "pid", "rss_bytes"])
            while True:
                sample, gone = read_rss(list(self.pids))
                for pid in gone:
                    if pid not in self.gone:
                        log.info("process %d gone; its memory counts as 0 from now on", pid)
                        self.gone.add(pid)
                self.samples.append(sample)
                for pid, rss in sample.rss.items():
                    w.writerow([repr(sample.timestamp), pid, rss])
                fh.flush()
                if self._stop.wait(self.interval):
                    break

    def stop(self) -> None:
        self._stop.set()
        if self._thread.is_alive():
            self._thread.join()

    @property
    def peak(self) -> int:
        return max((s.total for s in self.samples), default=0)


def read_memory_csv(path: str | Path) -> list[MemorySample]:
    ticks: dict[float, MemorySample] = {}
    order: list[float] = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            ts = float(row["timestamp"])
            if ts not in ticks:
                ticks[ts] = MemorySample(ts)
                order.append(ts)
            ticks[ts].rss[int(row["pid"])] = int(row["rss_bytes"])
    return [ticks[t] for t in order]


def peak_memory(samples: list[MemorySample]) -> tuple[int, dict[int, int]]:
    """(max over ticks of summed RSS, per-pid peaks)."""
    per_pid: dict[int, int] = {}
    for s in samples:
        for pid, rss in s.rss.items():
            per_pid[pid] = max(per_pid.get(pid, 0), rss)
    return max((s.total for s in samples), default=0), per_pid
