"""Command-line entry point.

One subcommand per experiment kind. Exit codes: 0 success, 2 configuration
error, 3 numerical contract violation, 4 steady-state degeneracy.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from ..errors import (
    ConfigError,
    ContractViolationError,
    CsvSchemaError,
    DegeneracyError,
    GraphError,
    InsufficientDataError,
    ShapeError,
    SizeError,
    ThresholdError,
)
from .config import EXPERIMENT_KINDS, load_config
from .experiments import run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_DEGENERACY = 4

_NUMERICAL_ERRORS = (
    ContractViolationError,
    GraphError,
    ShapeError,
    SizeError,
    ThresholdError,
    InsufficientDataError,
    CsvSchemaError,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quasigibbs",
        description="Steady-state experiments for 2-local stochastic quantum channels.",
    )
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in EXPERIMENT_KINDS:
        p = sub.add_parser(kind, help=f"run the {kind} experiment")
        p.add_argument("--config", required=True, help="YAML or JSON config file")
        p.add_argument("--seed", type=int, default=None, help="replace the config's seed list")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--workers", type=int, default=None, help="parallel worker cap")
        p.add_argument("--max-iter", type=int, default=None, help="fixed-point iteration cap")
        p.add_argument("--tol", type=float, default=None, help="fixed-point residual tolerance")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        overrides = {"kind": args.kind}
        if args.seed is not None:
            overrides["seeds"] = (args.seed,)
        if args.out is not None:
            overrides["out"] = args.out
        if args.workers is not None:
            overrides["workers"] = args.workers
        if args.max_iter is not None:
            overrides["max_iter"] = args.max_iter
        if args.tol is not None:
            overrides["convergence_tol"] = args.tol
        cfg = dataclasses.replace(cfg, **overrides)
        result = run_experiment(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegeneracyError as exc:
        print(f"degeneracy detected: {exc}", file=sys.stderr)
        return EXIT_DEGENERACY
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical contract violation: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for path in result.paths:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
