"""gradcheck command: finite-difference verification of every objective."""

import argparse

from ..gradcheck import DEFAULT_EPS, DEFAULT_TOLERANCE, OBJECTIVES, run_gradcheck
from .common import add_config_arguments, resolve_config


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(
        "gradcheck",
        help="Check analytic gradients against finite differences",
        description="Runs at float64 on a small synthetic batch; exits 0 only if every "
        "relative error is below the tolerance.",
    )
    parser.add_argument(
        "--tolerance", type=float, default=DEFAULT_TOLERANCE, help="Relative error threshold"
    )
    parser.add_argument(
        "--eps", type=float, default=DEFAULT_EPS, help="Central-difference step"
    )
    parser.add_argument("--coords", type=int, default=2, help="Sampled coordinates per tensor")
    parser.add_argument(
        "--objective", dest="objectives", action="append", choices=OBJECTIVES,
        help="Objective to check (repeatable; default: all)",
    )
    add_config_arguments(parser, toy_default=True)
    parser.set_defaults(handler=run)
    return parser


def run(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    report = run_gradcheck(
        config,
        seed=config.seed,
        eps=args.eps,
        tolerance=args.tolerance,
        coords_per_tensor=args.coords,
        objectives=tuple(args.objectives or OBJECTIVES),
    )
    print(report.format())
    return 0 if report.passed else 2
