"""Ablation grids run at toy scale: one training run and one held-in evaluation per setting."""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .config import TrainConfig, apply_overrides
from .errors import ConfigurationError
from .imaging import generate_synthetic_dataset, held_in_split
from .models import PersonSample
from .retrieval import build_report, evaluate_network
from .trainer import train
from .validator import ensure_valid

logger = logging.getLogger(__name__)

MASK_RATIOS = (0.1, 0.2, 0.3, 0.4, 0.45, 0.5, 0.55, 0.6)
LAMBDAS = (0.5, 0.6, 0.7, 0.8, 0.9, 0.93, 0.95, 0.97)


@dataclass
class SweepSetting:
    """One point of a grid: a directory-safe label and the overrides that define it."""

    label: str
    overrides: list[str] = field(default_factory=list)


def _grid(key: str, values, prefix: str) -> list[SweepSetting]:
    return [SweepSetting(f"{prefix}-{v}", [f"{key}={v}"]) for v in values]


SWEEPS: dict[str, list[SweepSetting]] = {
    "mask_ratio": _grid("strong_aug.mask.ratio", MASK_RATIOS, "ratio"),
    "lam": _grid("loss.lam", LAMBDAS, "lam"),
    "patch_projection": [
        SweepSetting("frozen", ["encoder.freeze_patch_projection=true"]),
        SweepSetting("learned", ["encoder.freeze_patch_projection=false"]),
    ],
    "occluder": _grid(
        "strong_aug.occluder",
        ("random_mask", "random_erasing", "cutout", "hide_and_seek"),
        "occluder",
    ),
    "strong_ops": [
        SweepSetting(
            "mask",
            ["strong_aug.jitter_prob=0", "strong_aug.blur_prob=0", "strong_aug.solarize_prob=0"],
        ),
        SweepSetting("mask+jitter", ["strong_aug.blur_prob=0", "strong_aug.solarize_prob=0"]),
        SweepSetting("mask+jitter+blur", ["strong_aug.solarize_prob=0"]),
        SweepSetting("mask+jitter+blur+solarize", []),
    ],
}


def sweep_settings(name: str) -> list[SweepSetting]:
    """Settings of a named grid.

    Raises:
        ConfigurationError: On an unknown grid name
    """
    if name not in SWEEPS:
        raise ConfigurationError(f"Unknown sweep '{name}'. Must be one of {sorted(SWEEPS)}")
    return SWEEPS[name]


@dataclass
class SweepResult:
    name: str
    out_dir: Path
    reports: list[dict] = field(default_factory=list)

    @property
    def summary_path(self) -> Path:
        return self.out_dir / "sweep.json"


def sweep_dataset(
    cfg: TrainConfig, n_ids: int = 10, imgs_per_id: int = 8, seed: int = 7
) -> list[PersonSample]:
    size = (cfg.encoder.image_height, cfg.encoder.image_width)
    cameras = min(4, cfg.encoder.num_cameras)
    return generate_synthetic_dataset(n_ids, imgs_per_id, cameras, seed, size=size)


def run_sweep(
    name: str,
    base: TrainConfig,
    out_dir: Path,
    dataset: Optional[list[PersonSample]] = None,
    settings: Optional[list[SweepSetting]] = None,
) -> SweepResult:
    """Train and evaluate every setting of a grid on one shared dataset.

    Each setting gets ``out_dir/<label>/`` with its run artifacts and a
    ``report.json``; ``out_dir/sweep.json`` collects all reports.

    Args:
        name: Grid name, one of ``SWEEPS``
        base: Configuration every setting's overrides are applied to
        out_dir: Output directory
        dataset: Training samples; a synthetic 10 x 8 dataset when omitted
        settings: Subset of the grid to run

    Returns:
        SweepResult with one report per setting
    """
    settings = settings if settings is not None else sweep_settings(name)
    dataset = dataset if dataset is not None else sweep_dataset(base)
    query, gallery = held_in_split(dataset)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    result = SweepResult(name=name, out_dir=out_dir)
    for setting in settings:
        cfg = ensure_valid(apply_overrides(base, setting.overrides))
        logger.info(f"Sweep {name}: running {setting.label}")
        trained = train(dataset, cfg, out_dir / setting.label)
        metrics = evaluate_network(trained.network, query, gallery)

        report = build_report(metrics, cfg.digest())
        report.update({"setting": setting.label, "overrides": setting.overrides})
        (out_dir / setting.label / "report.json").write_text(json.dumps(report, indent=2))
        result.reports.append(report)
        logger.info(
            f"Sweep {name}: {setting.label} mAP={metrics.mean_ap:.4f} rank1={metrics.rank1:.4f}"
        )

    summary = {"sweep": name, "settings": result.reports}
    result.summary_path.write_text(json.dumps(summary, indent=2))
    return result
