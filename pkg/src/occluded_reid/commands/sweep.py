"""sweep command: run an ablation grid at toy scale."""

import argparse
from pathlib import Path

from ..imaging import load_dataset
from ..models import Split
from ..sweeps import SWEEPS, run_sweep, sweep_settings
from .common import add_config_arguments, resolve_config


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(
        "sweep",
        help="Run an ablation grid",
        description="Train and evaluate one model per grid setting and write per-setting "
        "reports plus sweep.json.",
    )
    parser.add_argument("name", choices=sorted(SWEEPS), help="Grid to run")
    parser.add_argument("--out", type=Path, required=True, help="Output directory")
    parser.add_argument("--data", type=Path, help="Dataset root (default: synthetic 10 x 8 set)")
    parser.add_argument(
        "--only", action="append", metavar="LABEL", help="Run only the named settings (repeatable)"
    )
    add_config_arguments(parser, toy_default=True)
    parser.set_defaults(handler=run)
    return parser


def run(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    settings = sweep_settings(args.name)
    if args.only:
        settings = [s for s in settings if s.label in set(args.only)]

    dataset = None
    if args.data is not None:
        size = (config.encoder.image_height, config.encoder.image_width)
        dataset = load_dataset(args.data, Split.TRAIN, size=size)

    result = run_sweep(args.name, config, args.out, dataset=dataset, settings=settings)
    for report in result.reports:
        print(f"{report['setting']}: mAP={report['mAP']:.4f} rank1={report['rank1']:.4f}")
    print(f"Summary: {result.summary_path}")
    return 0
