"""Argument and configuration helpers shared by the subcommands."""

import argparse
import dataclasses
import logging
from datetime import datetime
from pathlib import Path
from typing import Optional

from ..config import CONFIG_ENV_VAR, TrainConfig
from ..imaging import generate_synthetic_dataset
from ..models import PersonSample
from ..validator import ensure_valid

logger = logging.getLogger(__name__)

SYNTH_IDS = 10
SYNTH_IMAGES_PER_ID = 8
SYNTH_CAMERAS = 4
SYNTH_SEED = 7


def add_config_arguments(parser: argparse.ArgumentParser, toy_default: bool = False) -> None:
    group = parser.add_argument_group("configuration")
    group.add_argument(
        "--config",
        type=Path,
        help=f"YAML configuration file (default: ${CONFIG_ENV_VAR} if set)",
    )
    group.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override one key, e.g. --set loss.lam=0.9 (repeatable)",
    )
    group.add_argument("--seed", type=int, help="Override the training seed")
    scale = group.add_mutually_exclusive_group()
    scale.add_argument(
        "--toy", dest="toy", action="store_true", default=toy_default,
        help="Start from the desk-scale defaults" + (" (default)" if toy_default else ""),
    )
    scale.add_argument(
        "--full", dest="toy", action="store_false",
        help="Start from the full-size defaults" + ("" if toy_default else " (default)"),
    )


def resolve_config(args: argparse.Namespace, echo: bool = True) -> TrainConfig:
    """defaults < file < --set flags < --seed; validated and echoed to stdout."""
    base = TrainConfig.toy() if args.toy else TrainConfig.default()
    config = TrainConfig.resolve(args.config, args.overrides, base=base)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    ensure_valid(config)
    if echo:
        echo_config(config)
    return config


def echo_config(config: TrainConfig) -> None:
    print("# resolved configuration")
    print(config.dump().rstrip())
    print(f"# config digest: {config.digest()}")


def add_run_dir_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--run-dir", type=Path,
        help="Output directory (default: <runs-root>/<timestamp>_seed<seed>)",
    )
    parser.add_argument(
        "--runs-root", type=Path, default=Path("runs"), help="Parent of new run directories"
    )


def run_directory(args: argparse.Namespace, seed: int) -> Path:
    if args.run_dir is not None:
        return Path(args.run_dir)
    stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
    return Path(args.runs_root) / f"{stamp}_seed{seed}"


def synthetic_training_set(config: TrainConfig, seed: Optional[int] = None) -> list[PersonSample]:
    """The 10 identities x 8 images x 4 cameras synthetic set at the encoder's input size."""
    size = (config.encoder.image_height, config.encoder.image_width)
    cameras = min(SYNTH_CAMERAS, config.encoder.num_cameras)
    return generate_synthetic_dataset(
        SYNTH_IDS, SYNTH_IMAGES_PER_ID, cameras, SYNTH_SEED if seed is None else seed, size=size
    )
