"""Command line entry point ``eki``.

Exit codes: 0 success, 2 configuration error, 3 solver failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .errors import ConfigError, EkiError, EmptyInput
from .harness import ExperimentConfig, load_records, run_experiment, summarize, table1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eki", description="Ensemble Kalman inversion experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a JSON config")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--out", type=Path, default=Path("eki_out"))
    run.add_argument("--seed", type=int)
    run.add_argument("--replications", type=int)

    summ = sub.add_parser("summarize", help="tabulate the run records in a directory")
    summ.add_argument("directory", type=Path)

    t1 = sub.add_parser("table1", help="reproduce one column of the relative-error table")
    t1.add_argument("--column", required=True, choices=["elliptic", "groundwater"])
    t1.add_argument("--replications", type=int)
    t1.add_argument("--seed", type=int, default=0)
    t1.add_argument("--J", type=int, default=100)
    t1.add_argument("--out", type=Path)
    return p


def _run(args) -> int:
    config = ExperimentConfig.from_file(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.replications is not None:
        overrides["replications"] = args.replications
    config = dataclasses.replace(config, **overrides)
    records = run_experiment(config, args.out)
    summary = summarize(records)
    (args.out / "summary.csv").write_text(summary.to_csv())
    print(summary.to_text())
    failed = [r.replication for r in records if r.failures]
    if failed:
        print(f"solver failures in replications {failed}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def _summarize(args) -> int:
    records = load_records(args.directory)
    if not records:
        records = [r for sub in sorted(args.directory.iterdir()) if sub.is_dir() for r in load_records(sub)]
    summary = summarize(records)
    (args.directory / "summary.csv").write_text(summary.to_csv())
    print(summary.to_text())
    return EXIT_OK


def _table1(args) -> int:
    summary, records = table1(args.column, args.replications, args.seed, args.J, args.out)
    if args.out is not None:
        (args.out / "summary.csv").write_text(summary.to_csv())
    print(summary.to_text())
    return EXIT_SOLVER if any(r.failures for r in records) else EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handler = {"run": _run, "summarize": _summarize, "table1": _table1}[args.command]
    try:
        return handler(args)
    except (ConfigError, EmptyInput) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EkiError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
