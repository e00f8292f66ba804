"""Pytest fixtures for integration tests."""

import dataclasses

import pytest
import torch

from occluded_reid import PersonSample, TrainConfig, generate_synthetic_dataset

FAST_OVERRIDES = [
    "epochs=2",
    "checkpoint_interval=1",
    "warmup_epochs=0",
    "encoder.depth=2",
    "heads.projector_hidden=32",
    "heads.projector_out=16",
    "heads.predictor_hidden=16",
]


@pytest.fixture
def fast_config() -> TrainConfig:
    """Toy configuration cut to two epochs of a depth-2 encoder with narrow heads."""
    toy = TrainConfig.toy()
    return dataclasses.replace(
        toy,
        epochs=2,
        checkpoint_interval=1,
        warmup_epochs=0,
        encoder=dataclasses.replace(toy.encoder, depth=2),
        heads=dataclasses.replace(
            toy.heads, projector_hidden=32, projector_out=16, predictor_hidden=16
        ),
    )


@pytest.fixture(scope="session")
def synthetic_set() -> list[PersonSample]:
    """The built-in 10 identities x 8 images x 4 cameras set at 32 x 32."""
    return generate_synthetic_dataset(10, 8, 4, seed=7, size=(32, 32))


@pytest.fixture(autouse=True)
def _fixed_torch_seed():
    torch.manual_seed(0)
