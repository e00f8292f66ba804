"""augment command: apply an augmentation pipeline to a directory and record mask statistics."""

import argparse
import logging
from pathlib import Path

import numpy as np

from ..augment import BASELINE_KINDS, apply_mask, normal_pipeline, occluder_mask, strong_view
from ..config import TrainConfig
from ..errors import DatasetError
from ..imaging import IMAGE_EXTENSIONS, load_image, save_image
from ..models import BinaryMask, ImageBuffer
from .common import add_config_arguments, resolve_config

logger = logging.getLogger(__name__)

PIPELINES = ("strong", "normal", *BASELINE_KINDS)


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(
        "augment",
        help="Augment a directory of images",
        description="Apply a pipeline to every image in --input and write the results, "
        "a per-image record (seed, mask fraction, rectangles) and a summary.",
    )
    parser.add_argument("--input", type=Path, required=True, help="Directory of input images")
    parser.add_argument("--out", type=Path, required=True, help="Output directory")
    parser.add_argument("--pipeline", choices=PIPELINES, default="strong", help="Pipeline to apply")
    parser.add_argument(
        "--resize", action="store_true", help="Resize inputs to the configured encoder size first"
    )
    add_config_arguments(parser)
    parser.set_defaults(handler=run)
    return parser


def augment_one(
    img: ImageBuffer, pipeline: str, config: TrainConfig, rng: np.random.Generator
) -> tuple[ImageBuffer, BinaryMask | None]:
    if pipeline == "strong":
        view = strong_view(img, config.strong_aug, rng)
        return view.image, view.mask
    if pipeline == "normal":
        return normal_pipeline(img, rng, config.normal_aug), None
    mask = occluder_mask(pipeline, img.shape[0], img.shape[1], config.strong_aug, rng)
    return apply_mask(img, mask), mask


def format_record(name: str, seed: int, mask: BinaryMask | None) -> str:
    if mask is None:
        return f"name={name} seed={seed} fraction=none rects="
    rects = ";".join(f"{r.top},{r.left},{r.height},{r.width}" for r in mask.rects)
    shortfall = " shortfall=1" if mask.shortfall else ""
    return f"name={name} seed={seed} fraction={mask.fraction:.6f} rects={rects}{shortfall}"


def run(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    if not args.input.is_dir():
        raise DatasetError("Input directory not found", root=args.input)
    files = sorted(
        p for p in args.input.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
    )
    if not files:
        raise DatasetError("No images found", root=args.input)

    size = (config.encoder.image_height, config.encoder.image_width) if args.resize else None
    args.out.mkdir(parents=True, exist_ok=True)

    records, fractions = [], []
    for index, path in enumerate(files):
        seed = config.seed + index
        try:
            img = load_image(path, size=size)
        except (OSError, ValueError) as e:
            raise DatasetError(f"Cannot read {path.name}: {e}", root=args.input) from e
        out, mask = augment_one(img, args.pipeline, config, np.random.default_rng(seed))
        save_image(out, args.out / f"{path.stem}.png")
        records.append(format_record(path.name, seed, mask))
        if mask is not None:
            fractions.append(mask.fraction)

    (args.out / "records.txt").write_text("\n".join(records) + "\n")
    if fractions:
        summary = (
            f"images={len(files)} pipeline={args.pipeline} mean_fraction={np.mean(fractions):.6f} "
            f"min_fraction={np.min(fractions):.6f} max_fraction={np.max(fractions):.6f}"
        )
    else:
        summary = f"images={len(files)} pipeline={args.pipeline} mean_fraction=none"
    (args.out / "summary.txt").write_text(summary + "\n")
    print(summary)
    return 0
