"""Configuration schema and loading for occluded-reid."""

import dataclasses
import hashlib
import json
import os
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import strictyaml
import yaml

from .errors import ConfigurationError

CONFIG_ENV_VAR = "OCCLUDED_REID_CONFIG"


@dataclass
class MaskSpec:
    """Random rectangle mask parameters.

    Attributes:
        ratio: Target masked fraction r, in [0, 1)
        max_height: Maximum rectangle height m_h in pixels
        max_width: Maximum rectangle width m_w in pixels
        max_attempts: Placement budget before giving up with a shortfall
        area_tolerance: Accept the mask once it covers r * (1 - tolerance)
    """

    ratio: float = 0.5
    max_height: int = 128
    max_width: int = 128
    max_attempts: int = 100
    area_tolerance: float = 0.02

    def clamped(self, height: int, width: int) -> "MaskSpec":
        """Return a copy whose maximum rectangle fits inside a height x width image."""
        return dataclasses.replace(
            self,
            max_height=max(1, min(self.max_height, height)),
            max_width=max(1, min(self.max_width, width)),
        )


@dataclass
class NormalAugConfig:
    """Augmentations of the supervised (normal) branch."""

    flip_prob: float = 0.5
    pad: int = 10
    crop_prob: float = 1.0
    erase_prob: float = 0.5
    erase_area_min: float = 0.02
    erase_area_max: float = 0.4
    erase_aspect_min: float = 0.3


@dataclass
class StrongAugConfig:
    """Augmentations of the contrastive (strong) branch.

    Setting a probability to 0 disables that op. ``occluder`` picks the
    occlusion applied last: ``random_mask`` (the rectangle-union mask),
    ``random_erasing``, ``cutout``, ``hide_and_seek`` or ``none``.
    ``enabled = False`` drops the strong view and the contrastive term.
    """

    enabled: bool = True
    occluder: str = "random_mask"
    mask: MaskSpec = field(default_factory=MaskSpec)
    brightness: float = 0.4
    contrast: float = 0.4
    saturation: float = 0.4
    hue: float = 0.1
    jitter_prob: float = 0.8
    blur_sigma_min: float = 0.1
    blur_sigma_max: float = 2.0
    blur_prob: float = 0.5
    solarize_threshold: float = 0.5
    solarize_prob: float = 0.2
    cutout_size: int = 64
    hide_grid: int = 4
    hide_prob: float = 0.5


@dataclass
class EncoderConfig:
    """Transformer encoder shape.

    ``init_std`` is the truncated-normal std of the linear layers in the
    blocks and heads. Embeddings and the patch projection always start at
    std 0.02.
    """

    image_height: int = 256
    image_width: int = 128
    patch_size: int = 16
    stride: int = 16
    embed_dim: int = 768
    depth: int = 12
    num_heads: int = 12
    mlp_ratio: float = 4.0
    jigsaw_groups: int = 4
    jigsaw_shift: int = 5
    sie_coefficient: float = 3.0
    num_cameras: int = 8
    freeze_patch_projection: bool = True
    init_std: float = 0.02

    @property
    def grid(self) -> tuple[int, int]:
        """Patch grid (rows, cols) for the sliding-window patch extraction."""
        rows = (self.image_height - self.patch_size) // self.stride + 1
        cols = (self.image_width - self.patch_size) // self.stride + 1
        return rows, cols

    @property
    def num_patches(self) -> int:
        rows, cols = self.grid
        return rows * cols


@dataclass
class HeadConfig:
    """Projector/predictor widths and retrieval head options."""

    projector_hidden: int = 4096
    projector_out: int = 256
    predictor_hidden: int = 4096
    batchnorm: bool = True
    bn_momentum: float = 0.1
    eval_feature: str = "concat"


@dataclass
class LossConfig:
    """Joint objective settings.

    Attributes:
        lam: Weight of the supervised loss; the contrastive loss gets 1 - lam
        mining: ``per_stream`` mines triplets for every feature stream,
            ``shared`` mines on the global stream and reuses the indices
        normalize_triplet: Mine and score triplets on L2-normalized features
            instead of raw ones
    """

    lam: float = 0.95
    mining: str = "per_stream"
    normalize_triplet: bool = False


@dataclass
class TrainConfig:
    """Main configuration for occluded-reid training.

    Example:
        >>> config = TrainConfig.toy()
        >>> config.encoder.embed_dim
        32
        >>> # Or load from YAML
        >>> config = TrainConfig.from_yaml(Path("reid_config.yaml"))
    """

    epochs: int = 120
    ids_per_batch: int = 25
    images_per_id: int = 4
    base_lr: float = 0.0125
    min_lr_ratio: float = 0.002
    momentum: float = 0.9
    weight_decay: float = 1e-4
    warmup_epochs: int = 0
    seed: int = 0
    checkpoint_interval: int = 10
    workers: int = 0
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    heads: HeadConfig = field(default_factory=HeadConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    normal_aug: NormalAugConfig = field(default_factory=NormalAugConfig)
    strong_aug: StrongAugConfig = field(default_factory=StrongAugConfig)

    @property
    def min_lr(self) -> float:
        return self.base_lr * self.min_lr_ratio

    @classmethod
    def default(cls) -> "TrainConfig":
        """Full-size defaults: 256x128 inputs, ViT-B shape, batch 25 x 4."""
        return cls()

    @classmethod
    def toy(cls) -> "TrainConfig":
        """Desk-scale defaults that train on a laptop CPU in minutes.

        Linear layers start at std 0.1, which at width 32 gives each matmul the
        gain the 768-wide default has at std 0.02. Triplets are scored on
        normalized features.
        """
        return cls(
            epochs=200,
            ids_per_batch=5,
            images_per_id=4,
            base_lr=0.05,
            warmup_epochs=5,
            checkpoint_interval=50,
            encoder=EncoderConfig(
                image_height=32,
                image_width=32,
                patch_size=8,
                stride=8,
                embed_dim=32,
                depth=4,
                num_heads=4,
                jigsaw_groups=2,
                jigsaw_shift=1,
                num_cameras=4,
                sie_coefficient=1.0,
                init_std=0.1,
            ),
            heads=HeadConfig(projector_hidden=256, projector_out=64, predictor_hidden=128),
            loss=LossConfig(normalize_triplet=True),
            strong_aug=StrongAugConfig(mask=MaskSpec(max_height=16, max_width=16), cutout_size=12),
        )

    @classmethod
    def from_yaml(cls, path: Path, base: Optional["TrainConfig"] = None) -> "TrainConfig":
        """Load configuration from a YAML file.

        Keys absent from the file keep the values of ``base`` (built-in defaults
        when omitted).

        Args:
            path: Path to the YAML configuration file
            base: Configuration the file is layered on

        Returns:
            TrainConfig instance

        Raises:
            ConfigurationError: If the file is missing, malformed or has unknown keys
        """
        path = Path(path)

        if not path.exists():
            raise ConfigurationError(f"Configuration file not found: {path}")

        try:
            parsed = strictyaml.load(path.read_text(), _schema_for(cls))
        except strictyaml.YAMLError as e:
            raise ConfigurationError(f"Invalid configuration file {path}: {e}")

        data = parsed.data
        if not isinstance(data, dict):
            raise ConfigurationError("Configuration must be a YAML mapping")

        return cls.from_dict(data, base=base)

    @classmethod
    def from_dict(cls, data: dict, base: Optional["TrainConfig"] = None) -> "TrainConfig":
        """Create configuration from a (possibly partial) nested dictionary.

        Args:
            data: Configuration dictionary
            base: Configuration providing values for missing keys

        Returns:
            TrainConfig instance
        """
        base = base if base is not None else cls.default()
        return _merge(base, data, prefix="")

    @classmethod
    def resolve(
        cls,
        path: Optional[Path] = None,
        overrides: Optional[list[str]] = None,
        base: Optional["TrainConfig"] = None,
    ) -> "TrainConfig":
        """Apply defaults < file < flag overrides.

        When ``path`` is None the file named by ``OCCLUDED_REID_CONFIG`` is used,
        if that variable is set.
        """
        config = base if base is not None else cls.default()
        if path is None and os.environ.get(CONFIG_ENV_VAR):
            path = Path(os.environ[CONFIG_ENV_VAR])
        if path is not None:
            config = cls.from_yaml(path, base=config)
        if overrides:
            config = apply_overrides(config, overrides)
        return config

    def to_dict(self) -> dict:
        """Convert configuration to a nested dictionary."""
        return dataclasses.asdict(self)

    def save_yaml(self, path: Path) -> None:
        """Save configuration to a YAML file."""
        with open(path, "w") as f:
            yaml.dump(self.to_dict(), f, default_flow_style=False, sort_keys=False)

    def dump(self) -> str:
        """Render the resolved configuration as YAML text."""
        return yaml.dump(self.to_dict(), default_flow_style=False, sort_keys=False)

    def digest(self) -> str:
        """SHA-256 over the canonical JSON form of the configuration."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _field_types(cls: type) -> dict[str, Any]:
    return typing.get_type_hints(cls)


def _schema_for(cls: type) -> strictyaml.Map:
    """Build a strictyaml schema from dataclass fields.

    All keys are optional; unknown keys are rejected by strictyaml.
    """
    validators: dict[Any, Any] = {}
    hints = _field_types(cls)
    for f in dataclasses.fields(cls):
        kind = hints[f.name]
        if dataclasses.is_dataclass(kind):
            validator = _schema_for(kind)
        elif kind is bool:
            validator = strictyaml.Bool()
        elif kind is int:
            validator = strictyaml.Int()
        elif kind is float:
            validator = strictyaml.Float()
        else:
            validator = strictyaml.Str()
        validators[strictyaml.Optional(f.name)] = validator
    return strictyaml.Map(validators)


def _merge(instance: Any, data: dict, prefix: str) -> Any:
    if not isinstance(data, dict):
        raise ConfigurationError(f"Section '{prefix or 'root'}' must be a mapping")

    hints = _field_types(type(instance))
    known = {f.name for f in dataclasses.fields(instance)}
    unknown = sorted(set(data) - known)
    if unknown:
        names = ", ".join(f"{prefix}{k}" for k in unknown)
        raise ConfigurationError(f"Unknown configuration keys: {names}")

    updates = {}
    for key, value in data.items():
        current = getattr(instance, key)
        if dataclasses.is_dataclass(current):
            updates[key] = _merge(current, value, prefix=f"{prefix}{key}.")
        else:
            updates[key] = _coerce(value, hints[key], f"{prefix}{key}")
    return dataclasses.replace(instance, **updates)


def _coerce(value: Any, kind: type, key: str) -> Any:
    if kind is bool:
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in ("true", "yes", "on", "1"):
            return True
        if text in ("false", "no", "off", "0"):
            return False
        raise ConfigurationError(f"'{key}' expects a boolean, got {value!r}")
    try:
        if kind is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if kind is float:
            return float(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"'{key}' expects {kind.__name__}, got {value!r}")
    return str(value)


def apply_overrides(config: TrainConfig, overrides: list[str]) -> TrainConfig:
    """Apply ``section.key=value`` overrides to a configuration.

    Args:
        config: Configuration to update
        overrides: Strings such as ``encoder.depth=4`` or ``epochs=10``

    Returns:
        Updated TrainConfig

    Raises:
        ConfigurationError: On malformed overrides or unknown keys
    """
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"Override must look like key=value, got '{item}'")
        dotted, raw = item.split("=", 1)
        parts = [p for p in dotted.strip().split(".") if p]
        if not parts:
            raise ConfigurationError(f"Empty override key in '{item}'")
        nested: dict[str, Any] = {parts[-1]: raw.strip()}
        for part in reversed(parts[:-1]):
            nested = {part: nested}
        config = _merge(config, nested, prefix="")
    return config
