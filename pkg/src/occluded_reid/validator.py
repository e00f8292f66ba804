"""Semantic validation of occluded-reid configuration sections.

Every ``validate_*`` function returns a list of error messages; an empty list
means the section is valid.
"""

from .config import (
    EncoderConfig,
    HeadConfig,
    LossConfig,
    MaskSpec,
    NormalAugConfig,
    StrongAugConfig,
    TrainConfig,
)
from .errors import ConfigurationError

OCCLUDERS = ("random_mask", "random_erasing", "cutout", "hide_and_seek", "none")
EVAL_FEATURES = ("concat", "global")
MINING_SCOPES = ("per_stream", "shared")


def _check_probability(name: str, value: float) -> list[str]:
    if not 0.0 <= value <= 1.0:
        return [f"{name} must be a probability in [0, 1], got {value}"]
    return []


def _check_positive(name: str, value: float) -> list[str]:
    if value <= 0:
        return [f"{name} must be positive, got {value}"]
    return []


def validate_mask_spec(spec: MaskSpec, height: int = 0, width: int = 0) -> list[str]:
    """Validate a mask spec, optionally against the image it will be applied to."""
    errors = []

    if not 0.0 <= spec.ratio < 1.0:
        errors.append(f"mask.ratio must lie in [0, 1), got {spec.ratio}")
    if spec.max_height < 1 or spec.max_width < 1:
        errors.append(
            f"mask maximum size must be at least 1x1, got ({spec.max_height}, {spec.max_width})"
        )
    if height and spec.max_height > height:
        errors.append(f"mask.max_height {spec.max_height} exceeds image height {height}")
    if width and spec.max_width > width:
        errors.append(f"mask.max_width {spec.max_width} exceeds image width {width}")
    if spec.max_attempts < 1:
        errors.append(f"mask.max_attempts must be at least 1, got {spec.max_attempts}")
    if not 0.0 <= spec.area_tolerance < 1.0:
        errors.append(f"mask.area_tolerance must lie in [0, 1), got {spec.area_tolerance}")

    return errors


def validate_normal_aug(cfg: NormalAugConfig) -> list[str]:
    errors = []
    errors.extend(_check_probability("normal_aug.flip_prob", cfg.flip_prob))
    errors.extend(_check_probability("normal_aug.crop_prob", cfg.crop_prob))
    errors.extend(_check_probability("normal_aug.erase_prob", cfg.erase_prob))
    if cfg.pad < 0:
        errors.append(f"normal_aug.pad must be non-negative, got {cfg.pad}")
    if not 0.0 < cfg.erase_area_min <= cfg.erase_area_max <= 1.0:
        errors.append(
            "normal_aug erase area range must satisfy 0 < min <= max <= 1, got "
            f"[{cfg.erase_area_min}, {cfg.erase_area_max}]"
        )
    if not 0.0 < cfg.erase_aspect_min <= 1.0:
        errors.append(f"normal_aug.erase_aspect_min must lie in (0, 1], got {cfg.erase_aspect_min}")
    return errors


def validate_strong_aug(cfg: StrongAugConfig) -> list[str]:
    errors = []

    if cfg.occluder not in OCCLUDERS:
        errors.append(f"strong_aug.occluder must be one of {list(OCCLUDERS)}, got '{cfg.occluder}'")
    errors.extend(validate_mask_spec(cfg.mask))
    for name in ("brightness", "contrast", "saturation"):
        value = getattr(cfg, name)
        if not 0.0 <= value <= 1.0:
            errors.append(f"strong_aug.{name} must lie in [0, 1], got {value}")
    if not 0.0 <= cfg.hue <= 0.5:
        errors.append(f"strong_aug.hue must lie in [0, 0.5], got {cfg.hue}")
    for name in ("jitter_prob", "blur_prob", "solarize_prob", "hide_prob"):
        errors.extend(_check_probability(f"strong_aug.{name}", getattr(cfg, name)))
    if not 0.0 < cfg.blur_sigma_min <= cfg.blur_sigma_max:
        errors.append(
            "strong_aug blur sigma range must satisfy 0 < min <= max, got "
            f"[{cfg.blur_sigma_min}, {cfg.blur_sigma_max}]"
        )
    if not 0.0 <= cfg.solarize_threshold <= 1.0:
        errors.append(
            f"strong_aug.solarize_threshold must lie in [0, 1], got {cfg.solarize_threshold}"
        )
    if cfg.cutout_size < 0:
        errors.append(f"strong_aug.cutout_size must be non-negative, got {cfg.cutout_size}")
    if cfg.hide_grid < 1:
        errors.append(f"strong_aug.hide_grid must be at least 1, got {cfg.hide_grid}")

    return errors


def validate_encoder(cfg: EncoderConfig) -> list[str]:
    errors = []

    for name in ("image_height", "image_width", "patch_size", "stride", "embed_dim", "num_heads"):
        errors.extend(_check_positive(f"encoder.{name}", getattr(cfg, name)))
    if errors:
        return errors

    if cfg.patch_size > cfg.image_height or cfg.patch_size > cfg.image_width:
        errors.append(
            f"encoder.patch_size {cfg.patch_size} exceeds image size "
            f"{cfg.image_height}x{cfg.image_width}"
        )
        return errors

    if cfg.embed_dim % cfg.num_heads != 0:
        errors.append(
            f"encoder.embed_dim {cfg.embed_dim} is not divisible by num_heads {cfg.num_heads}"
        )
    if cfg.depth < 2:
        errors.append(f"encoder.depth must be at least 2, got {cfg.depth}")
    if cfg.jigsaw_groups < 1:
        errors.append(f"encoder.jigsaw_groups must be at least 1, got {cfg.jigsaw_groups}")
    elif cfg.jigsaw_groups > cfg.num_patches:
        errors.append(
            f"encoder.jigsaw_groups {cfg.jigsaw_groups} exceeds patch count {cfg.num_patches}"
        )
    if cfg.jigsaw_shift < 0:
        errors.append(f"encoder.jigsaw_shift must be non-negative, got {cfg.jigsaw_shift}")
    if cfg.num_cameras < 1:
        errors.append(f"encoder.num_cameras must be at least 1, got {cfg.num_cameras}")
    if not cfg.init_std > 0.0:
        errors.append(f"encoder.init_std must be positive, got {cfg.init_std}")
    errors.extend(_check_positive("encoder.mlp_ratio", cfg.mlp_ratio))

    return errors


def validate_heads(cfg: HeadConfig) -> list[str]:
    errors = []
    for name in ("projector_hidden", "projector_out", "predictor_hidden"):
        errors.extend(_check_positive(f"heads.{name}", getattr(cfg, name)))
    if not 0.0 < cfg.bn_momentum <= 1.0:
        errors.append(f"heads.bn_momentum must lie in (0, 1], got {cfg.bn_momentum}")
    if cfg.eval_feature not in EVAL_FEATURES:
        errors.append(
            f"heads.eval_feature must be one of {list(EVAL_FEATURES)}, got '{cfg.eval_feature}'"
        )
    return errors


def validate_loss(cfg: LossConfig) -> list[str]:
    errors = []
    if not 0.0 <= cfg.lam <= 1.0:
        errors.append(f"loss.lam must lie in [0, 1], got {cfg.lam}")
    if cfg.mining not in MINING_SCOPES:
        errors.append(f"loss.mining must be one of {list(MINING_SCOPES)}, got '{cfg.mining}'")
    return errors


def validate_train_config(cfg: TrainConfig) -> list[str]:
    """Validate a complete training configuration.

    Args:
        cfg: Configuration to check

    Returns:
        List of validation error messages. Empty list means valid.
    """
    errors = []

    errors.extend(_check_positive("epochs", cfg.epochs))
    errors.extend(_check_positive("ids_per_batch", cfg.ids_per_batch))
    errors.extend(_check_positive("images_per_id", cfg.images_per_id))
    errors.extend(_check_positive("base_lr", cfg.base_lr))
    if not 0.0 <= cfg.min_lr_ratio <= 1.0:
        errors.append(f"min_lr_ratio must lie in [0, 1], got {cfg.min_lr_ratio}")
    if not 0.0 <= cfg.momentum < 1.0:
        errors.append(f"momentum must lie in [0, 1), got {cfg.momentum}")
    if cfg.weight_decay < 0:
        errors.append(f"weight_decay must be non-negative, got {cfg.weight_decay}")
    if cfg.warmup_epochs < 0:
        errors.append(f"warmup_epochs must be non-negative, got {cfg.warmup_epochs}")
    if cfg.checkpoint_interval < 0:
        errors.append(f"checkpoint_interval must be non-negative, got {cfg.checkpoint_interval}")
    if cfg.workers < 0:
        errors.append(f"workers must be non-negative, got {cfg.workers}")

    errors.extend(validate_encoder(cfg.encoder))
    errors.extend(validate_heads(cfg.heads))
    errors.extend(validate_loss(cfg.loss))
    errors.extend(validate_normal_aug(cfg.normal_aug))
    errors.extend(validate_strong_aug(cfg.strong_aug))

    return errors


def ensure_valid(cfg: TrainConfig) -> TrainConfig:
    """Raise ConfigurationError listing every problem, or return ``cfg`` unchanged."""
    errors = validate_train_config(cfg)
    if errors:
        raise ConfigurationError(f"Invalid configuration: {'; '.join(errors)}", errors)
    return cfg
