"""eval command: retrieval metrics for a checkpoint."""

import argparse
import json
from pathlib import Path

from ..checkpoint import load_checkpoint
from ..imaging import held_in_split, load_dataset
from ..models import Split
from ..retrieval import build_report, evaluate_network
from .common import echo_config, synthetic_training_set


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(
        "eval",
        help="Evaluate a checkpoint",
        description="Extract embeddings for query and gallery and report mAP and CMC as JSON.",
    )
    parser.add_argument("--checkpoint", type=Path, required=True, help="Checkpoint file")
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--data", type=Path, help="Dataset root with query/ and bounding_box_test/")
    source.add_argument(
        "--synthetic", action="store_true",
        help="Held-in evaluation on the built-in synthetic training set",
    )
    parser.add_argument(
        "--held-in", action="store_true",
        help="With --data, split bounding_box_train/ into query and gallery instead",
    )
    parser.add_argument(
        "--report", type=Path, help="Report path (default: report.json next to the checkpoint)"
    )
    parser.set_defaults(handler=run)
    return parser


def run(args: argparse.Namespace) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    config = checkpoint.config
    echo_config(config)
    size = (config.encoder.image_height, config.encoder.image_width)

    if args.synthetic:
        query, gallery = held_in_split(synthetic_training_set(config))
    elif args.held_in:
        query, gallery = held_in_split(load_dataset(args.data, Split.TRAIN, size=size))
    else:
        query = load_dataset(args.data, Split.QUERY, size=size)
        gallery = load_dataset(args.data, Split.GALLERY, size=size)

    metrics = evaluate_network(checkpoint.build_network(), query, gallery)
    report = build_report(metrics, config.digest())
    report_path = args.report or args.checkpoint.parent / "report.json"
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(json.dumps(report, indent=2))

    print(
        f"mAP={metrics.mean_ap:.4f} rank1={metrics.rank1:.4f} rank5={metrics.rank(5):.4f} "
        f"rank10={metrics.rank(10):.4f} queries={metrics.num_queries} "
        f"excluded={metrics.num_excluded}"
    )
    print(f"Report: {report_path}")
    return 0
