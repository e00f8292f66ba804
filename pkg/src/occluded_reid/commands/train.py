"""train command: joint training on a Market-1501-style directory or the synthetic set."""

import argparse
from pathlib import Path

from ..imaging import load_dataset
from ..models import Split
from ..trainer import train
from .common import (
    add_config_arguments,
    add_run_dir_arguments,
    resolve_config,
    run_directory,
    synthetic_training_set,
)


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(
        "train",
        help="Train a model",
        description="Train with the joint supervised and contrastive objective; writes "
        "config.yaml, train.log and checkpoints into the run directory.",
    )
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--data", type=Path, help="Dataset root with a bounding_box_train/ split")
    source.add_argument(
        "--synthetic", action="store_true", help="Train on the built-in 10 x 8 synthetic set"
    )
    parser.add_argument("--resume", type=Path, help="Checkpoint to resume from")
    add_run_dir_arguments(parser)
    add_config_arguments(parser)
    parser.set_defaults(handler=run)
    return parser


def run(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    size = (config.encoder.image_height, config.encoder.image_width)
    if args.synthetic:
        dataset = synthetic_training_set(config)
    else:
        dataset = load_dataset(args.data, Split.TRAIN, size=size)

    run_dir = run_directory(args, config.seed)
    result = train(dataset, config, run_dir, resume=args.resume)
    final = result.history[-1].total if result.history else float("nan")
    print(f"Trained {len(result.history)} steps, final loss {final:.6f}")
    print(f"Checkpoint: {result.checkpoint_path}")
    print(f"Log: {result.log_path}")
    return 0
