"""Launch, supervise and collect one experiment run."""

from __future__ import annotations

import logging
import os
import shlex
import shutil
import signal
import socket
import subprocess
import sys
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import HostUnreachable, MissingLog, PortConflict, RunFailed, SpawnFailure
from ..eventlog import log_path
from ..transport.endpoint import listen
from .config import ExperimentConfig
from .memory import MemorySampler
from .party import serve_aggregator, serve_client
from .protocols import worker_count

log = logging.getLogger(__name__)

TERM_GRACE_S = 3.0


@dataclass
class ProcessRecord:
    role: str
    worker: int
    host: str
    log_path: Path
    pid: int | None = None
    popen: subprocess.Popen | None = None
    thread: threading.Thread | None = None
    error: BaseException | None = None

    @property
    def name(self) -> str:
        return self.log_path.name

    def alive(self) -> bool:
        if self.popen is not None:
            return self.popen.poll() is None
        if self.thread is not None:
            return self.thread.is_alive()
        return False


@dataclass
class RunHandle:
    run_id: str
    repeat: int
    config: ExperimentConfig
    run_dir: Path          # <out_dir>/<run_id>/repeat_<i>
    work_dir: Path         # where parties write; equals run_dir except for remote runs
    processes: list[ProcessRecord] = field(default_factory=list)
    status: str = "running"
    sampler: MemorySampler | None = None
    result: dict = field(default_factory=dict)
    missing: list[str] = field(default_factory=list)
    failure: str | None = None

    @property
    def log_paths(self) -> list[Path]:
        return [p.log_path for p in self.processes]

    @property
    def pids(self) -> list[int]:
        return [p.pid for p in self.processes if p.pid is not None]


def new_run_id() -> str:
    return f"{time.strftime('%Y%m%d-%H%M%S')}-{uuid.uuid4().hex[:6]}"


def free_port(host: str = "127.0.0.1") -> int:
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as s:
        s.bind((host, 0))
        return s.getsockname()[1]


def check_port(host: str, port: int) -> None:
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as s:
        try:
            s.bind((host, port))
        except OSError as exc:
            raise PortConflict(f"aggregator port {host}:{port} is taken: {exc}") from exc


def _fill(template: str, **values: str) -> list[str]:
    """Split a command template into argv, then substitute each placeholder per token."""
    return [tok.format(**values) for tok in shlex.split(template)]


def probe_host(cfg: ExperimentConfig, host: str) -> None:
    argv = _fill(cfg.deployment.probe_template, host=host)
    try:
        done = subprocess.run(argv, capture_output=True, timeout=30)
    except (OSError, subprocess.TimeoutExpired) as exc:
        raise HostUnreachable(f"{host}: probe failed ({exc})") from exc
    if done.returncode != 0:
        raise HostUnreachable(f"{host}: probe exited {done.returncode}: {done.stderr.decode(errors='replace').strip()}")


def _party_argv(cfg: ExperimentConfig, role: str, worker: int, addr: str, log_file: Path,
                config_file: Path, result_file: Path | None = None) -> list[str]:
    python = cfg.deployment.python or (sys.executable if cfg.deployment.mode == "local_processes" else "python3")
    argv = [python, "-m", "fedbench.orchestrator.party", "--config", str(config_file),
            "--role", role, "--worker", str(worker), "--addr", addr, "--log", str(log_file)]
    if cfg.cache_dir:
        argv += ["--cache-dir", cfg.cache_dir]
    if result_file is not None:
        argv += ["--result", str(result_file)]
    return argv


def _spawn(argv: list[str], out_file: Path) -> subprocess.Popen:
    env = dict(os.environ)
    # children must import the same package the supervisor runs
    src = str(Path(__file__).resolve().parents[2])
    env["PYTHONPATH"] = src + (os.pathsep + env["PYTHONPATH"] if env.get("PYTHONPATH") else "")
    try:
        with open(out_file, "wb") as out:
            return subprocess.Popen(argv, stdout=out, stderr=subprocess.STDOUT, env=env,
                                    start_new_session=True)
    except OSError as exc:
        raise SpawnFailure(f"cannot start {argv[0]}: {exc}") from exc


def launch(config: ExperimentConfig, repeat: int = 0, run_id: str | None = None) -> RunHandle:
    """Start the aggregator, then the clients, then the memory sampler."""
    cfg = config.with_seed_offset(repeat)
    dep = cfg.deployment
    run_id = run_id or new_run_id()
    run_dir = Path(dep.out_dir) / run_id / f"repeat_{repeat}"
    work_dir = run_dir
    if dep.mode == "remote_shell":
        work_dir = Path(dep.work_dir or (Path(dep.out_dir) / run_id / ".remote")).resolve() / f"repeat_{repeat}"
    run_dir.mkdir(parents=True, exist_ok=True)
    work_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.yaml").write_text(cfg.dump(), encoding="utf-8")
    handle = RunHandle(run_id, repeat, cfg, run_dir, work_dir)
    workers = worker_count(cfg)

    if dep.mode == "in_process":
        _launch_threads(handle, workers)
        handle.sampler = MemorySampler(run_dir / "memory.csv", [os.getpid()], dep.memory_interval_ms).start()
        return handle

    port = dep.port
    if port:
        check_port(dep.bind_host if dep.mode == "local_processes" else "0.0.0.0", port)
    else:
        port = free_port(dep.bind_host)
    config_file = (work_dir / "config.yaml").resolve()
    if work_dir != run_dir:
        config_file.write_text(cfg.dump(), encoding="utf-8")
    handle.sampler = MemorySampler(run_dir / "memory.csv", [], dep.memory_interval_ms)
    try:
        if dep.mode == "local_processes":
            _launch_local(handle, workers, port, config_file)
        else:
            _launch_remote(handle, workers, port, config_file)
    except BaseException:
        teardown(handle)
        handle.status = "failed"
        raise
    handle.sampler.start()
    return handle


def _launch_threads(handle: RunHandle, workers: int) -> None:
    cfg = handle.config
    listener = listen(f"inproc://{handle.run_id}-{handle.repeat}-{uuid.uuid4().hex[:6]}")
    addr = listener.address

    def body(rec: ProcessRecord, fn, *args):
        try:
            out = fn(*args)
            if rec.role == "aggregator":
                handle.result.update({k: v for k, v in out.items() if isinstance(v, (int, float))})
        except BaseException as exc:  # reported by wait()
            rec.error = exc

    agg = ProcessRecord("aggregator", 0, "localhost", log_path(handle.run_dir, "aggregator", 0), os.getpid())
    agg.thread = threading.Thread(target=body, args=(agg, serve_aggregator, cfg, listener, str(agg.log_path)),
                                  name="aggregator", daemon=True)
    handle.processes.append(agg)
    for w in range(workers):
        rec = ProcessRecord("client", w, "localhost", log_path(handle.run_dir, "client", w + 1), os.getpid())
        rec.thread = threading.Thread(target=body, args=(rec, serve_client, cfg, addr, w, str(rec.log_path)),
                                      name=f"client-{w + 1}", daemon=True)
        handle.processes.append(rec)
    for rec in handle.processes:
        rec.thread.start()


def _launch_local(handle: RunHandle, workers: int, port: int, config_file: Path) -> None:
    cfg, wd = handle.config, handle.work_dir
    addr = f"tcp://{cfg.deployment.bind_host}:{port}"
    roles = [("aggregator", 0)] + [("client", w) for w in range(workers)]
    for role, w in roles:
        index = 0 if role == "aggregator" else w + 1
        rec = ProcessRecord(role, w, "localhost", (wd / f"{role}_{index}.log").resolve())
        result = (wd / "result.json").resolve() if role == "aggregator" else None
        argv = _party_argv(cfg, role, w, addr, rec.log_path, config_file, result)
        rec.popen = _spawn(argv, wd / f"{role}_{index}.out")
        rec.pid = rec.popen.pid
        handle.processes.append(rec)
        handle.sampler.add(rec.pid)


def _launch_remote(handle: RunHandle, workers: int, port: int, config_file: Path) -> None:
    cfg, wd = handle.config, handle.work_dir
    hosts = cfg.deployment.hosts
    probed: set[str] = set()
    roles = [("aggregator", 0)] + [("client", w) for w in range(workers)]
    for role, w in roles:
        index = 0 if role == "aggregator" else w + 1
        host = hosts[index % len(hosts)]
        if host not in probed:
            probe_host(cfg, host)
            probed.add(host)
        addr = f"tcp://0.0.0.0:{port}" if role == "aggregator" else f"tcp://{hosts[0]}:{port}"
        rec = ProcessRecord(role, w, host, wd / f"{role}_{index}.log")
        result = wd / "result.json" if role == "aggregator" else None
        cmd = shlex.join(_party_argv(cfg, role, w, addr, rec.log_path, config_file, result))
        argv = _fill(cfg.deployment.remote_template, host=host, cmd=cmd)
        rec.popen = _spawn(argv, handle.run_dir / f"{role}_{index}.out")
        rec.pid = rec.popen.pid
        handle.processes.append(rec)
        handle.sampler.add(rec.pid)


def _kill(rec: ProcessRecord, sig: int) -> None:
    try:
        os.killpg(rec.popen.pid, sig)
    except (ProcessLookupError, PermissionError):
        pass


def teardown(handle: RunHandle) -> None:
    """Terminate every spawned process group (TERM, then KILL after a grace period)."""
    procs = [p for p in handle.processes if p.popen is not None]
    for rec in procs:
        if rec.popen.poll() is None:
            _kill(rec, signal.SIGTERM)
    deadline = time.monotonic() + TERM_GRACE_S
    for rec in procs:
        try:
            rec.popen.wait(max(0.0, deadline - time.monotonic()))
        except subprocess.TimeoutExpired:
            pass
    for rec in procs:
        # the group may hold grandchildren (remote shell wrappers) even after the leader exits
        _kill(rec, signal.SIGKILL)
        try:
            rec.popen.wait(1.0)
        except subprocess.TimeoutExpired:
            log.warning("process %d did not exit after SIGKILL", rec.popen.pid)
    if handle.sampler is not None:
        handle.sampler.stop()


def wait(handle: RunHandle, timeout: float | None = None) -> str:
    """Supervise until every party exits; on the first failure tear down the rest."""
    timeout = handle.config.deployment.timeout_s if timeout is None else timeout
    deadline = time.monotonic() + timeout
    try:
        while True:
            failed = _first_failure(handle)
            if failed:
                handle.failure = failed
                break
            if not any(p.alive() for p in handle.processes):
                break
            if time.monotonic() > deadline:
                handle.failure = f"run exceeded {timeout}s"
                break
            time.sleep(0.05)
    except BaseException:
        handle.failure = "interrupted"
        handle.status = "failed"
        teardown(handle)
        raise
    teardown(handle)
    handle.status = "failed" if handle.failure else "finished"
    return handle.status


def _first_failure(handle: RunHandle) -> str | None:
    for p in handle.processes:
        if p.error is not None:
            return f"{p.role} {p.worker}: {type(p.error).__name__}: {p.error}"
        if p.popen is not None:
            code = p.popen.poll()
            if code not in (None, 0):
                return f"{p.role} {p.worker} (pid {p.pid}) exited with code {code}"
    return None


def collect(handle: RunHandle) -> Path:
    """Gather logs into ``<out_dir>/<run_id>/repeat_<i>/``; missing logs are listed, not fatal."""
    dep = handle.config.deployment
    for rec in handle.processes:
        dst = handle.run_dir / rec.name
        if handle.work_dir != handle.run_dir:
            argv = _fill(dep.copy_template, host=rec.host, src=str(rec.log_path), dst=str(dst))
            try:
                subprocess.run(argv, capture_output=True, timeout=120, check=False)
            except (OSError, subprocess.TimeoutExpired) as exc:
                log.warning("copy of %s from %s failed: %s", rec.log_path, rec.host, exc)
        if not dst.exists():
            handle.missing.append(rec.name)
            log.warning("%s", MissingLog(f"no log from {rec.role} {rec.worker} at {rec.host}:{rec.log_path}"))
    if handle.work_dir != handle.run_dir:
        res = handle.work_dir / "result.json"
        if res.exists():
            shutil.copy(res, handle.run_dir / "result.json")
    return handle.run_dir


def run_repeat(config: ExperimentConfig, repeat: int, run_id: str) -> RunHandle:
    handle = launch(config, repeat, run_id)
    wait(handle)
    collect(handle)
    return handle


def run_experiment(config: ExperimentConfig, run_id: str | None = None) -> tuple[Path, list[RunHandle]]:
    """Every repeat in sequence (seed + i).  Raises RunFailed after collecting a failed repeat."""
    run_id = run_id or new_run_id()
    root = Path(config.deployment.out_dir) / run_id
    root.mkdir(parents=True, exist_ok=True)
    (root / "config.yaml").write_text(config.dump(), encoding="utf-8")
    handles = []
    for i in range(config.repeats):
        h = run_repeat(config, i, run_id)
        handles.append(h)
        if h.status != "finished":
            raise RunFailed(f"repeat {i} failed: {h.failure}; partial logs in {h.run_dir}")
    return root, handles
