"""synth command: write a synthetic dataset in the Market-1501 layout."""

import argparse
from pathlib import Path

from ..imaging import generate_synthetic_dataset, write_dataset
from .common import add_config_arguments, resolve_config


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(
        "synth",
        help="Generate a synthetic person dataset",
        description="Render procedural identities and write bounding_box_train/, query/ "
        "and bounding_box_test/ at the configured input size.",
    )
    parser.add_argument("--out", type=Path, required=True, help="Dataset root to write")
    parser.add_argument("--n-ids", type=int, default=10, help="Number of identities (>= 2)")
    parser.add_argument("--imgs-per-id", type=int, default=8, help="Images per identity (>= 2)")
    parser.add_argument("--n-cams", type=int, default=4, help="Number of cameras")
    parser.add_argument("--data-seed", type=int, default=7, help="Generator seed")
    parser.add_argument("--query-per-id", type=int, default=1, help="Query images per identity")
    parser.add_argument("--gallery-per-id", type=int, default=1, help="Gallery images per identity")
    add_config_arguments(parser)
    parser.set_defaults(handler=run)
    return parser


def run(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    samples = generate_synthetic_dataset(
        args.n_ids,
        args.imgs_per_id,
        args.n_cams,
        args.data_seed,
        size=(config.encoder.image_height, config.encoder.image_width),
    )
    counts = write_dataset(samples, args.out, args.query_per_id, args.gallery_per_id)
    total = sum(counts.values())
    summary = ", ".join(f"{k}={v}" for k, v in counts.items())
    print(f"Wrote {total} images to {args.out}: {summary}")
    return 0
