"""Pytest fixtures for unit tests."""

import dataclasses

import numpy as np
import pytest
import torch

from occluded_reid import TrainConfig, generate_synthetic_dataset


@pytest.fixture
def toy_config() -> TrainConfig:
    """Desk-scale configuration (32x32 inputs, D=32, depth 4, K=2)."""
    return TrainConfig.toy()


@pytest.fixture
def small_config(toy_config: TrainConfig) -> TrainConfig:
    """Toy configuration with narrow heads and a 2 x 2 batch, for fast model tests."""
    heads = dataclasses.replace(
        toy_config.heads, projector_hidden=16, projector_out=8, predictor_hidden=8
    )
    return dataclasses.replace(toy_config, heads=heads, ids_per_batch=2, images_per_id=2)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)


@pytest.fixture
def image(rng: np.random.Generator) -> np.ndarray:
    """Random 24 x 16 RGB image in [0, 1]."""
    return rng.random((24, 16, 3)).astype(np.float32)


@pytest.fixture
def toy_samples():
    """4 identities x 4 images at 32 x 32, two cameras."""
    return generate_synthetic_dataset(4, 4, 2, seed=3, size=(32, 32))


@pytest.fixture(autouse=True)
def _fixed_torch_seed():
    torch.manual_seed(0)
