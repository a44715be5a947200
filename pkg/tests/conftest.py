from __future__ import annotations

import os

import numpy as np
import pytest

from fedbench.scenario.types import DatasetTable

# criterion number -> (status, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status:4s}  {detail}")


@pytest.fixture
def cache_dir(tmp_path, monkeypatch):
    d = tmp_path / "cache"
    monkeypatch.setenv("FEDBENCH_CACHE", str(d))
    return d


def make_table(rng: np.random.Generator, n: int, f: int, task: str = "binary", classes: int = 2,
               prefix: str = "r") -> DatasetTable:
    x = rng.normal(size=(n, f))
    if task == "regression":
        y = x @ rng.normal(size=f) + 0.1 * rng.normal(size=n)
    elif task == "multiclass":
        y = rng.integers(0, classes, size=n).astype(np.int64)
    else:
        y = (x @ rng.normal(size=f) + 0.3 * rng.normal(size=n) > 0).astype(np.int64)
    return DatasetTable([f"{prefix}{i}" for i in range(n)], x, y)


def no_children_left(timeout: float = 5.0) -> list:
    """Child processes of this test process still alive after ``timeout``."""
    import time

    import psutil

    me = psutil.Process(os.getpid())
    deadline = time.monotonic() + timeout
    while True:
        alive = [p for p in me.children(recursive=True) if p.is_running() and p.status() != psutil.STATUS_ZOMBIE]
        if not alive or time.monotonic() > deadline:
            return alive
        time.sleep(0.1)


def run_threads(raw: dict, tmp_path, cache_dir=None) -> dict:
    """Run one repeat's parties as threads over an in-process listener; returns the aggregator output."""
    import threading
    import uuid

    from fedbench.orchestrator import config_from_dict
    from fedbench.orchestrator.party import serve_aggregator, serve_client
    from fedbench.orchestrator.protocols import worker_count
    from fedbench.transport import listen

    cfg = config_from_dict(raw)
    listener = listen(f"inproc://test-{uuid.uuid4().hex[:8]}")
    out: dict = {}
    errors: list[BaseException] = []

    def guard(fn, *args):
        try:
            res = fn(*args)
            if res is not None:
                out.update(res)
        except BaseException as exc:
            errors.append(exc)

    threads = [threading.Thread(target=guard, args=(serve_aggregator, cfg, listener,
                                                    str(tmp_path / "aggregator_0.log"), cache_dir))]
    for w in range(worker_count(cfg)):
        threads.append(threading.Thread(target=guard, args=(serve_client, cfg, listener.address, w,
                                                            str(tmp_path / f"client_{w + 1}.log"), cache_dir)))
    for t in threads:
        t.start()
    for t in threads:
        t.join(120)
    if errors:
        raise errors[0]
    return out
