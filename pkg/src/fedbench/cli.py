"""Command line: run, analyze, fetch, advise."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from importlib import resources
from pathlib import Path

from .errors import FedBenchError


def bundled_config(name: str) -> Path:
    """Path of a config shipped with the package, e.g. ``synthetic_2client``."""
    return Path(str(resources.files("fedbench").joinpath(f"configs/{name}.yaml")))


def cmd_run(args: argparse.Namespace) -> int:
    from .analyzer import analyze, write_report
    from .orchestrator import parse_config, run_experiment

    cfg_path = args.config
    if not Path(cfg_path).exists() and bundled_config(cfg_path).exists():
        cfg_path = bundled_config(cfg_path)
    cfg = parse_config(cfg_path)
    if args.out_dir:
        cfg.deployment.out_dir = args.out_dir
    if args.mode:
        cfg.deployment.mode = args.mode
    if args.repeats:
        cfg.repeats = args.repeats
    if args.print_effective_config:
        print(cfg.dump(), end="")
        return 0
    run_dir, _ = run_experiment(cfg, args.run_id)
    report = analyze(run_dir)
    path = write_report(report, run_dir)
    print(report.to_text())
    print(f"report: {path}")
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    from .analyzer import analyze, compare, write_report

    reports = []
    for d in args.run_dirs:
        rep = analyze(d)
        write_report(rep, d)
        reports.append(rep)
    if len(reports) == 1:
        print(json.dumps(reports[0].to_dict(), indent=2) if args.json else reports[0].to_text())
        return 0
    table = compare(reports)
    if args.json:
        print(json.dumps(table.to_dict(), indent=2))
    elif args.csv:
        print(table.to_csv(), end="")
    else:
        print(table.to_text())
    return 0


def cmd_fetch(args: argparse.Namespace) -> int:
    from .scenario import load_scenario

    sc = load_scenario(args.scenario, args.cache_dir)
    print(f"{sc.name}: {sc.setting}, {len(sc.clients)} parties, {sc.total_rows} rows, digest {sc.digest()[:16]}")
    return 0


def cmd_advise(args: argparse.Namespace) -> int:
    from .advisor import format_recommendations, load_matrix, load_requirement, select
    from .errors import NoMatch

    matrix = load_matrix(args.matrix)
    req = load_requirement(args.requirements)
    try:
        recs = select(req, matrix)
    except NoMatch as exc:
        if args.json:
            print(json.dumps({"match": False, "reason": str(exc), "trace": exc.trace}, indent=2))
        else:
            print(f"no match: {exc}")
            for step in exc.trace:
                print(f"  {step}")
        return 2
    if args.json:
        print(json.dumps({"match": True, "requirement": dataclasses.asdict(req),
                          "ranking": [{"framework": r.framework, "rank": r.rank, "trace": r.trace} for r in recs]},
                         indent=2))
    else:
        print(format_recommendations(recs))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fedbench", description="Federated learning benchmark harness")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="launch, train, collect and analyze one experiment")
    p.add_argument("config", help="YAML config path, or the name of a bundled config")
    p.add_argument("--out-dir", default=None)
    p.add_argument("--mode", choices=("in_process", "local_processes", "remote_shell"), default=None)
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--run-id", default=None)
    p.add_argument("--print-effective-config", action="store_true",
                   help="print the config with defaults filled in and exit")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("analyze", help="report on one run directory, or compare several")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--json", action="store_true")
    p.add_argument("--csv", action="store_true", help="comparison table as CSV")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("fetch", help="download and cache a scenario")
    p.add_argument("scenario")
    p.add_argument("--cache-dir", default=None)
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("advise", help="recommend frameworks for a requirements file")
    p.add_argument("requirements")
    p.add_argument("--matrix", default=None, help="feature matrix file (default: shipped)")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_advise)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FedBenchError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
