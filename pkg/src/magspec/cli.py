"""Command-line entry point: one subcommand per experiment kind.

Exit codes: 0 success, 2 configuration error, 3 numerical/convergence
error, 4 hypothesis violation (e.g. no spectral gap where one is required).
"""

from __future__ import annotations

import argparse
import sys

from .config import EXPERIMENT_KINDS, parse_config
from .errors import (
    CapacityError,
    ConfigError,
    ConvergenceError,
    DataError,
    HypothesisError,
    MagspecError,
    ModelError,
    PreconditionError,
    ReductionInvalidError,
    ShapeError,
)
from .runner import run

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_HYPOTHESIS = 4


def _exit_code(exc: MagspecError) -> int:
    if isinstance(exc, (CapacityError, ConvergenceError, ReductionInvalidError)):
        return EXIT_NUMERICAL
    if isinstance(exc, HypothesisError):
        return EXIT_HYPOTHESIS
    if isinstance(exc, (ConfigError, ShapeError, DataError, ModelError, PreconditionError)):
        return EXIT_CONFIG
    return EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="magspec",
        description="spectral experiments on random magnetic Schrödinger operators",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in EXPERIMENT_KINDS:
        p = sub.add_parser(kind.replace("_", "-"), help=f"run a {kind} experiment")
        p.add_argument("--config", required=True, help="path to the JSON experiment config")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--threads", type=int, default=None, help="ensemble worker threads")
        p.set_defaults(kind=kind)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        if cfg.experiment != args.kind:
            raise ConfigError(
                f"config declares experiment {cfg.experiment!r}, "
                f"but the {args.kind.replace('_', '-')} subcommand was invoked"
            )
        manifest = run(cfg, out_dir=args.out, seed=args.seed, workers=args.threads)
    except MagspecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    print(f"ok: {cfg.experiment} -> {cfg.output_directory}")
    for line in manifest["defaults_used"]:
        print(f"  default: {line}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
