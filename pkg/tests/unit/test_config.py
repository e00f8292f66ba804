"""Tests for configuration loading, overrides and validation."""

import dataclasses
from pathlib import Path

import pytest

from occluded_reid import ConfigurationError, EncoderConfig, TrainConfig, ensure_valid
from occluded_reid.config import CONFIG_ENV_VAR, apply_overrides
from occluded_reid.validator import validate_mask_spec, validate_train_config


class TestDefaults:
    """Built-in defaults."""

    def test_full_size_defaults(self):
        config = TrainConfig.default()
        assert config.loss.lam == 0.95
        assert config.ids_per_batch * config.images_per_id == 100
        assert config.base_lr == 0.0125
        assert config.momentum == 0.9
        assert config.weight_decay == 1e-4
        assert config.strong_aug.mask.ratio == 0.5
        assert (config.strong_aug.mask.max_height, config.strong_aug.mask.max_width) == (128, 128)
        assert config.min_lr == pytest.approx(0.0125 * 0.002)
        assert config.encoder.init_std == 0.02
        assert config.loss.normalize_triplet is False

    def test_toy_defaults(self):
        config = TrainConfig.toy()
        assert config.encoder.embed_dim == 32
        assert config.encoder.depth == 4
        assert config.encoder.jigsaw_groups == 2
        assert config.encoder.num_patches == 16
        assert config.encoder.init_std == 0.1
        assert config.loss.normalize_triplet is True

    def test_defaults_are_valid(self):
        assert validate_train_config(TrainConfig.default()) == []
        assert validate_train_config(TrainConfig.toy()) == []

    def test_patch_counts(self):
        market = dict(image_height=256, image_width=128, patch_size=16)
        assert EncoderConfig(**market, stride=16).num_patches == 128
        assert EncoderConfig(**market, stride=12).num_patches == 210


class TestYaml:
    """Loading configuration files."""

    def test_nested_sections(self, tmp_path: Path):
        path = tmp_path / "config.yaml"
        path.write_text(
            "epochs: 3\n"
            "loss:\n"
            "  lam: 0.9\n"
            "encoder:\n"
            "  freeze_patch_projection: false\n"
            "strong_aug:\n"
            "  occluder: cutout\n"
            "  mask:\n"
            "    ratio: 0.3\n"
        )
        config = TrainConfig.from_yaml(path, base=TrainConfig.toy())
        assert config.epochs == 3
        assert config.loss.lam == 0.9
        assert config.encoder.freeze_patch_projection is False
        assert config.strong_aug.occluder == "cutout"
        assert config.strong_aug.mask.ratio == 0.3
        # Untouched keys keep the base values
        assert config.encoder.embed_dim == 32

    def test_unknown_key_rejected(self, tmp_path: Path):
        path = tmp_path / "config.yaml"
        path.write_text("loss:\n  lambda: 0.9\n")
        with pytest.raises(ConfigurationError):
            TrainConfig.from_yaml(path)

    def test_ill_typed_value_rejected(self, tmp_path: Path):
        path = tmp_path / "config.yaml"
        path.write_text("epochs: many\n")
        with pytest.raises(ConfigurationError):
            TrainConfig.from_yaml(path)

    def test_missing_file(self, tmp_path: Path):
        with pytest.raises(ConfigurationError, match="not found"):
            TrainConfig.from_yaml(tmp_path / "absent.yaml")

    def test_saved_config_loads_back(self, tmp_path: Path):
        config = dataclasses.replace(TrainConfig.toy(), epochs=7)
        config.save_yaml(tmp_path / "saved.yaml")
        assert TrainConfig.from_yaml(tmp_path / "saved.yaml") == config

    def test_example_file_matches_toy(self):
        path = Path(__file__).parents[2] / "reid_config.yaml"
        assert TrainConfig.from_yaml(path, base=TrainConfig.default()) == TrainConfig.toy()

    def test_env_var_names_default_file(self, tmp_path: Path, monkeypatch):
        path = tmp_path / "env.yaml"
        path.write_text("seed: 11\n")
        monkeypatch.setenv(CONFIG_ENV_VAR, str(path))
        assert TrainConfig.resolve().seed == 11


class TestOverrides:
    """--set key=value handling."""

    def test_dotted_overrides(self):
        config = apply_overrides(
            TrainConfig.toy(),
            ["loss.lam=0.5", "encoder.depth=3", "strong_aug.mask.ratio=0.25", "epochs=2"],
        )
        assert config.loss.lam == 0.5
        assert config.encoder.depth == 3
        assert config.strong_aug.mask.ratio == 0.25
        assert config.epochs == 2

    def test_flags_beat_file(self, tmp_path: Path):
        path = tmp_path / "config.yaml"
        path.write_text("loss:\n  lam: 0.8\n")
        config = TrainConfig.resolve(path, ["loss.lam=0.6"])
        assert config.loss.lam == 0.6

    def test_boolean_override(self):
        config = apply_overrides(TrainConfig.toy(), ["strong_aug.enabled=false"])
        assert config.strong_aug.enabled is False

    @pytest.mark.parametrize(
        "override",
        ["loss.lambda=0.5", "nosuch=1", "encoder.depth=2.5", "loss.lam", "=3"],
    )
    def test_bad_overrides(self, override: str):
        with pytest.raises(ConfigurationError):
            apply_overrides(TrainConfig.toy(), [override])


class TestDigest:
    def test_digest_is_stable(self):
        assert TrainConfig.toy().digest() == TrainConfig.toy().digest()
        assert len(TrainConfig.toy().digest()) == 64

    def test_digest_tracks_values(self):
        changed = apply_overrides(TrainConfig.toy(), ["loss.lam=0.9"])
        assert changed.digest() != TrainConfig.toy().digest()


class TestValidation:
    """Semantic validation."""

    @pytest.mark.parametrize(
        "override, fragment",
        [
            ("loss.lam=1.5", "loss.lam"),
            ("momentum=1.0", "momentum"),
            ("encoder.num_heads=5", "divisible"),
            ("encoder.jigsaw_groups=17", "jigsaw_groups"),
            ("encoder.depth=1", "depth"),
            ("strong_aug.occluder=scribble", "occluder"),
            ("strong_aug.blur_sigma_min=3.0", "sigma"),
            ("heads.eval_feature=local", "eval_feature"),
            ("loss.mining=joint", "mining"),
            ("encoder.init_std=0", "init_std"),
        ],
    )
    def test_invalid_values_reported(self, override: str, fragment: str):
        config = apply_overrides(TrainConfig.toy(), [override])
        errors = validate_train_config(config)
        assert any(fragment in error for error in errors), errors
        with pytest.raises(ConfigurationError) as excinfo:
            ensure_valid(config)
        assert excinfo.value.errors == errors

    def test_mask_spec_checked_against_image(self):
        spec = TrainConfig.default().strong_aug.mask
        assert validate_mask_spec(spec, 256, 128) == []
        assert validate_mask_spec(spec, 64, 64)
        assert validate_mask_spec(dataclasses.replace(spec, ratio=1.0))
