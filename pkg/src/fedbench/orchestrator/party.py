"""Entry point for one party process: ``python -m fedbench.orchestrator.party``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from ..eventlog import Logger
from ..scenario.catalog import load_scenario
from ..transport.endpoint import connect, listen
from ..transport.frame import PeerId
from .config import ENGINES, ExperimentConfig, parse_config
from .protocols import Party, run_aggregator, run_client, worker_count

log = logging.getLogger("fedbench.party")

ACCEPT_TIMEOUT_S = 120.0
CONNECT_TIMEOUT_S = 60.0


def serve_aggregator(cfg: ExperimentConfig, listener, log_file: str, cache_dir: str | None = None) -> dict:
    """Accept every worker on ``listener`` then drive the run; closes the listener."""
    scenario = load_scenario(cfg.scenario, cache_dir or cfg.cache_dir)
    with Logger(log_file, "aggregator") as logger:
        eps = []
        try:
            for _ in range(worker_count(cfg)):
                eps.append(listener.accept(logger=logger, timeout=ACCEPT_TIMEOUT_S))
            eps.sort(key=lambda e: e.remote.index)
            return run_aggregator(Party(cfg, scenario, logger), eps)
        finally:
            listener.close()
            for ep in eps:
                ep.close()


def serve_client(cfg: ExperimentConfig, addr: str, worker: int, log_file: str,
                 cache_dir: str | None = None) -> None:
    scenario = load_scenario(cfg.scenario, cache_dir or cfg.cache_dir)
    with Logger(log_file, "client") as logger:
        ep = connect(addr, PeerId("client", worker + 1), timeout=CONNECT_TIMEOUT_S)
        try:
            run_client(Party(cfg, scenario, logger), ep, worker)
        finally:
            ep.close()


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="fedbench-party")
    ap.add_argument("--config", required=True, help="effective config snapshot")
    ap.add_argument("--role", choices=("aggregator", "client"), required=True)
    ap.add_argument("--worker", type=int, default=0, help="0-based client slot")
    ap.add_argument("--addr", required=True, help="aggregator address, e.g. tcp://127.0.0.1:7000")
    ap.add_argument("--log", required=True, help="event log path")
    ap.add_argument("--cache-dir", default=None)
    ap.add_argument("--result", default=None, help="aggregator writes its metrics here")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")

    cfg = parse_config(args.config)
    plugin = ENGINES.get(cfg.engine)
    if plugin is not None:
        return int(plugin(args) or 0)
    if args.role == "aggregator":
        listener = listen(args.addr)
        out = serve_aggregator(cfg, listener, args.log, args.cache_dir)
        metrics = {k: v for k, v in out.items() if isinstance(v, (int, float))}
        log.info("aggregator finished: %s", metrics)
        if args.result:
            with open(args.result, "w", encoding="utf-8") as fh:
                json.dump(metrics, fh)
    else:
        serve_client(cfg, args.addr, args.worker, args.log, args.cache_dir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
