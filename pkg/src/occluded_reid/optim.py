"""SGD with momentum, selective weight decay, and the cosine learning-rate schedule."""

import logging
import math

import torch
from torch import nn

from .config import TrainConfig

logger = logging.getLogger(__name__)

# Embedding tables that are excluded from weight decay.
NO_DECAY_NAMES = ("cls_token", "pos_embed", "sie_embed")


def _decays(name: str, param: nn.Parameter) -> bool:
    if param.ndim <= 1 or name.endswith(".bias"):
        return False
    return name.rsplit(".", 1)[-1] not in NO_DECAY_NAMES


def parameter_groups(network: nn.Module, weight_decay: float) -> list[dict]:
    """Split trainable parameters into a decayed group (weights) and an undecayed one.

    Normalization scales and offsets, biases and the class/position/camera
    embeddings are not decayed. Frozen parameters are left out entirely, so
    the optimizer holds no momentum buffers for them.
    """
    decay, no_decay = [], []
    for name, param in network.named_parameters():
        if not param.requires_grad:
            continue
        (decay if _decays(name, param) else no_decay).append(param)
    return [
        {"params": decay, "weight_decay": weight_decay},
        {"params": no_decay, "weight_decay": 0.0},
    ]


def build_optimizer(network: nn.Module, cfg: TrainConfig) -> torch.optim.SGD:
    """SGD implementing v <- m * v + g + wd * w, w <- w - lr * v."""
    groups = [g for g in parameter_groups(network, cfg.weight_decay) if g["params"]]
    return torch.optim.SGD(groups, lr=cfg.base_lr, momentum=cfg.momentum, dampening=0.0)


def sgd_step(optimizer: torch.optim.Optimizer, lr: float) -> None:
    """Apply one update at learning rate ``lr`` using the gradients already in ``.grad``."""
    for group in optimizer.param_groups:
        group["lr"] = lr
    optimizer.step()


def cosine_lr(step: int, total_steps: int, base_lr: float, min_lr: float) -> float:
    """min_lr + (base_lr - min_lr) * (1 + cos(pi * step / total_steps)) / 2."""
    if total_steps <= 0:
        return base_lr
    progress = min(max(step, 0), total_steps) / total_steps
    return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + math.cos(math.pi * progress))


def scheduled_lr(
    step: int, total_steps: int, warmup_steps: int, base_lr: float, min_lr: float
) -> float:
    """Linear warmup from base_lr / warmup_steps to base_lr, then cosine decay to min_lr."""
    if warmup_steps > 0 and step < warmup_steps:
        return base_lr * (step + 1) / warmup_steps
    return cosine_lr(step - warmup_steps, total_steps - warmup_steps, base_lr, min_lr)


def global_norm(tensors) -> float:
    """L2 norm over a collection of tensors, skipping None entries."""
    total = 0.0
    for t in tensors:
        if t is not None:
            total += float(t.detach().double().pow(2).sum())
    return math.sqrt(total)
