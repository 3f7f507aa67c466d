"""Command-line interface.

Subcommands: gen-data, sweep, analyze, validate, theory.
Exit codes: 0 success, 1 usage error, 2 data error, 3 property failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .analysis import AnalysisError
from .experiment import (
    DataError,
    analyze,
    load_config,
    run_sweep,
    theory_table,
)
from .graphs import DatasetError, generate_synthetic, write_dataset
from .validate import run_property_suite

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PROPERTY = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="qgnoise", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic JSONL dataset")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-atoms", type=int, default=11)

    p = sub.add_parser("sweep", help="run the seeds x noise-levels training grid")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", action="store_true",
                   help="skip (seed, epsilon) pairs already present in runs.jsonl")

    p = sub.add_parser("analyze", help="build report.json and CSV tables from runs")
    p.add_argument("--runs", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true",
                   help="accept run lines whose config digest differs")

    p = sub.add_parser("validate", help="run the property suite")
    p.add_argument("--config", required=True)

    p = sub.add_parser("theory", help="print per-molecule optimal error rates")
    p.add_argument("--config", required=True)

    return parser


def _cmd_gen_data(args) -> int:
    graphs = generate_synthetic(args.count, args.seed, max_atoms=args.max_atoms)
    write_dataset(graphs, args.out)
    print(f"wrote {len(graphs)} graphs to {args.out}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    config = load_config(args.config)
    runs_path = run_sweep(config, resume=args.resume, log=lambda msg: print(msg, flush=True))
    print(f"results in {runs_path}")
    return EXIT_OK


def _cmd_analyze(args) -> int:
    config = load_config(args.config)
    report = analyze(args.runs, config, args.out, force=args.force)
    fr = report["category_fractions"]
    print(
        f"{report['n_seeds']} seeds: "
        f"{fr['beneficial']:.1%} beneficial / {fr['detrimental']:.1%} detrimental / "
        f"{fr['marginal']:.1%} marginal; report in {args.out}"
    )
    return EXIT_OK


def _cmd_validate(args) -> int:
    config = load_config(args.config)
    from .experiment import resolve_dataset

    results = run_property_suite(graphs=resolve_dataset(config))
    failures = 0
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
        failures += not r.passed
    if failures:
        print(f"{failures} propert{'y' if failures == 1 else 'ies'} failed")
        return EXIT_PROPERTY
    print(f"all {len(results)} properties passed")
    return EXIT_OK


def _cmd_theory(args) -> int:
    config = load_config(args.config)
    table = theory_table(config)
    summary = table["summary"]
    print(f"{'index':>6} {'atoms':>6} {'bonds':>6} {'gates':>6} {'eps_opt':>10}")
    for row in table["rows"]:
        print(f"{row['index']:>6} {row['n_atoms']:>6} {row['n_bonds']:>6} "
              f"{row['gate_count']:>6} {row['epsilon_opt']:>10.5f}")
    if summary["n_molecules"]:
        print(
            f"cohort: {summary['n_molecules']} molecules, gates "
            f"[{summary['gate_count_min']}, {summary['gate_count_max']}], eps_opt "
            f"[{summary['epsilon_opt_min']:.5f}, {summary['epsilon_opt_max']:.5f}]"
        )
    print(f"configured grid: {summary['epsilon_grid']}")
    return EXIT_OK


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "sweep": _cmd_sweep,
    "analyze": _cmd_analyze,
    "validate": _cmd_validate,
    "theory": _cmd_theory,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (DataError, DatasetError, AnalysisError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
