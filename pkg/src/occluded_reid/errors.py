"""Custom exceptions for occluded-reid."""

from pathlib import Path
from typing import Optional


class ReIDError(Exception):
    """Base exception for all occluded-reid errors."""

    pass


class ConfigurationError(ReIDError):
    """Raised when configuration is invalid."""

    def __init__(self, message: str, errors: Optional[list[str]] = None):
        super().__init__(message)
        self.errors = errors or [message]


class DatasetError(ReIDError):
    """Raised when a dataset cannot be loaded, generated or sampled."""

    def __init__(self, message: str, root: Optional[Path] = None):
        self.root = root
        if root is not None:
            message = f"{message} ({root})"
        super().__init__(message)


class ShapeError(ReIDError):
    """Raised when an image, mask or tensor has the wrong shape."""

    pass


class AugmentationError(ReIDError):
    """Raised when an augmentation receives invalid parameters."""

    pass


class LossError(ReIDError):
    """Raised when a loss is undefined for its inputs (zero norms, no triplets)."""

    pass


class NonFiniteLossError(ReIDError):
    """Raised when a training step produces a non-finite loss."""

    def __init__(self, step: int, loss: float, param_norm: float, grad_norm: float):
        self.step = step
        self.loss = loss
        self.param_norm = param_norm
        self.grad_norm = grad_norm
        super().__init__(
            f"Non-finite loss {loss} at step {step} "
            f"(param_norm={param_norm:.6g}, grad_norm={grad_norm:.6g})"
        )


class CheckpointError(ReIDError):
    """Raised when a checkpoint archive is missing or malformed."""

    def __init__(self, path: Path, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"Checkpoint {path}: {reason}")


class EvaluationError(ReIDError):
    """Raised when retrieval evaluation cannot produce metrics."""

    pass
