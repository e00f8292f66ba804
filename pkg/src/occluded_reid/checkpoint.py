"""Self-describing checkpoint archives.

A checkpoint is a ``torch.save`` archive (zip container, little-endian tensor
storage) holding one dictionary:

    format       "occluded-reid-checkpoint/1"
    config       resolved TrainConfig as a nested dict
    num_classes  number of training identities
    tensors      list of {name, shape, trainable, data}; data is float32
    buffers      list of {name, data}; BatchNorm running statistics
    optimizer    SGD state dict (momentum buffers), or None
    step, epoch  counters for resuming

Parameters appear in ``named_parameters()`` order, so any reader that walks the
list can rebuild the model without importing this package.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import torch
from torch import nn

from .config import TrainConfig
from .errors import CheckpointError
from .network import ReIDNetwork

logger = logging.getLogger(__name__)

FORMAT = "occluded-reid-checkpoint/1"


@dataclass
class TensorRecord:
    name: str
    shape: tuple[int, ...]
    trainable: bool
    data: torch.Tensor = field(repr=False)


@dataclass
class Checkpoint:
    """A loaded checkpoint; ``build_network`` turns it back into a model."""

    config: TrainConfig
    num_classes: int
    tensors: list[TensorRecord]
    buffers: dict[str, torch.Tensor]
    optimizer: Optional[dict[str, Any]] = None
    step: int = 0
    epoch: int = 0
    path: Optional[Path] = None

    def state_dict(self) -> dict[str, torch.Tensor]:
        state = {record.name: record.data for record in self.tensors}
        state.update(self.buffers)
        return state

    def build_network(self) -> ReIDNetwork:
        network = ReIDNetwork(self.config, self.num_classes)
        load_into(network, self)
        return network


def parameter_store(network: nn.Module) -> list[TensorRecord]:
    """Named float32 copies of every parameter with its trainable flag."""
    return [
        TensorRecord(
            name=name,
            shape=tuple(param.shape),
            trainable=bool(param.requires_grad),
            data=param.detach().to(torch.float32).contiguous().clone(),
        )
        for name, param in network.named_parameters()
    ]


def save_checkpoint(
    path: Path,
    network: ReIDNetwork,
    config: TrainConfig,
    optimizer: Optional[torch.optim.Optimizer] = None,
    step: int = 0,
    epoch: int = 0,
) -> Path:
    """Write a checkpoint; identical inputs give byte-identical files for the same file name."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    payload = {
        "format": FORMAT,
        "config": config.to_dict(),
        "num_classes": int(network.num_classes),
        "tensors": [
            {"name": r.name, "shape": list(r.shape), "trainable": r.trainable, "data": r.data}
            for r in parameter_store(network)
        ],
        "buffers": [
            {"name": name, "data": buf.detach().contiguous().clone()}
            for name, buf in network.named_buffers()
        ],
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "step": int(step),
        "epoch": int(epoch),
    }
    torch.save(payload, path)
    logger.info(f"Saved checkpoint {path} (step {step}, epoch {epoch})")
    return path


def load_checkpoint(path: Path) -> Checkpoint:
    """Read and validate a checkpoint archive.

    Raises:
        CheckpointError: If the file is missing, unreadable or not in the expected format
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(path, "file not found")

    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as e:
        raise CheckpointError(path, f"unreadable archive: {e}")

    if not isinstance(payload, dict) or payload.get("format") != FORMAT:
        found = payload.get("format") if isinstance(payload, dict) else type(payload).__name__
        raise CheckpointError(path, f"expected format {FORMAT}, found {found}")

    try:
        config = TrainConfig.from_dict(payload["config"], base=TrainConfig.default())
        tensors = [
            TensorRecord(
                name=entry["name"],
                shape=tuple(entry["shape"]),
                trainable=bool(entry["trainable"]),
                data=entry["data"],
            )
            for entry in payload["tensors"]
        ]
        buffers = {entry["name"]: entry["data"] for entry in payload["buffers"]}
        checkpoint = Checkpoint(
            config=config,
            num_classes=int(payload["num_classes"]),
            tensors=tensors,
            buffers=buffers,
            optimizer=payload.get("optimizer"),
            step=int(payload.get("step", 0)),
            epoch=int(payload.get("epoch", 0)),
            path=path,
        )
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(path, f"malformed payload: {e}")

    for record in tensors:
        if tuple(record.data.shape) != record.shape:
            raise CheckpointError(
                path,
                f"tensor {record.name} has shape {tuple(record.data.shape)}, "
                f"header says {record.shape}",
            )
        if not torch.isfinite(record.data).all():
            raise CheckpointError(path, f"tensor {record.name} holds non-finite values")

    return checkpoint


def load_into(network: ReIDNetwork, checkpoint: Checkpoint) -> None:
    """Copy checkpoint tensors into ``network`` and restore trainable flags."""
    try:
        network.load_state_dict(checkpoint.state_dict(), strict=True)
    except RuntimeError as e:
        raise CheckpointError(checkpoint.path or Path("<memory>"), f"does not match the model: {e}")
    params = dict(network.named_parameters())
    for record in checkpoint.tensors:
        params[record.name].requires_grad_(record.trainable)
