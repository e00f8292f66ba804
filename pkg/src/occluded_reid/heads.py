"""BNNeck classifiers for the ID loss and the projector/predictor pair of the contrastive branch."""

from typing import Optional

import torch
from torch import nn

from .config import HeadConfig
from .errors import ShapeError


def _norm(dim: int, cfg: HeadConfig) -> nn.Module:
    if not cfg.batchnorm:
        return nn.Identity()
    return nn.BatchNorm1d(dim, momentum=cfg.bn_momentum)


def _check_width(x: torch.Tensor, expected: int, where: str) -> None:
    if x.dim() != 2 or x.shape[1] != expected:
        raise ShapeError(f"{where} expects B x {expected} input, got {tuple(x.shape)}")


class ClassifierHead(nn.Module):
    """BNNeck followed by a bias-free linear classifier.

    The neck uses batch statistics in training mode and running statistics in
    eval mode, so ``eval()`` makes ``forward`` a pure function.
    """

    def __init__(self, dim: int, num_classes: int, cfg: HeadConfig):
        super().__init__()
        self.dim = dim
        self.bnneck = _norm(dim, cfg)
        self.classifier = nn.Linear(dim, num_classes, bias=False)

    @property
    def num_classes(self) -> int:
        return self.classifier.out_features

    def neck(self, feature: torch.Tensor) -> torch.Tensor:
        _check_width(feature, self.dim, "Classifier")
        return self.bnneck(feature)

    def forward(self, feature: torch.Tensor) -> torch.Tensor:
        return self.classifier(self.neck(feature))


class SupervisedHeads(nn.Module):
    """One independent classifier for the global stream and one per jigsaw group."""

    def __init__(self, dim: int, num_classes: int, num_groups: int, cfg: HeadConfig):
        super().__init__()
        self.global_head = ClassifierHead(dim, num_classes, cfg)
        self.local_heads = nn.ModuleList(
            ClassifierHead(dim, num_classes, cfg) for _ in range(num_groups)
        )

    def forward(
        self, global_feature: torch.Tensor, local_features: torch.Tensor
    ) -> tuple[torch.Tensor, list[torch.Tensor]]:
        if local_features.shape[1] != len(self.local_heads):
            raise ShapeError(
                f"Expected {len(self.local_heads)} local features, got {local_features.shape[1]}"
            )
        logits_global = self.global_head(global_feature)
        logits_local = [head(local_features[:, k]) for k, head in enumerate(self.local_heads)]
        return logits_global, logits_local


class Projector(nn.Module):
    """Three-layer MLP: BN + ReLU on both hidden layers, BN without ReLU on the output."""

    def __init__(self, in_dim: int, cfg: HeadConfig):
        super().__init__()
        self.in_dim = in_dim
        hidden, out = cfg.projector_hidden, cfg.projector_out
        self.layers = nn.Sequential(
            nn.Linear(in_dim, hidden),
            _norm(hidden, cfg),
            nn.ReLU(),
            nn.Linear(hidden, hidden),
            _norm(hidden, cfg),
            nn.ReLU(),
            nn.Linear(hidden, out),
            _norm(out, cfg),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        _check_width(x, self.in_dim, "Projector")
        return self.layers(x)


class Predictor(nn.Module):
    """Two-layer bottleneck MLP with a plain linear output."""

    def __init__(self, cfg: HeadConfig):
        super().__init__()
        self.in_dim = cfg.projector_out
        self.layers = nn.Sequential(
            nn.Linear(cfg.projector_out, cfg.predictor_hidden),
            _norm(cfg.predictor_hidden, cfg),
            nn.ReLU(),
            nn.Linear(cfg.predictor_hidden, cfg.projector_out),
        )

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        _check_width(z, self.in_dim, "Predictor")
        return self.layers(z)


class ContrastiveHead(nn.Module):
    def __init__(self, in_dim: int, cfg: Optional[HeadConfig] = None):
        super().__init__()
        cfg = cfg or HeadConfig()
        self.projector = Projector(in_dim, cfg)
        self.predictor = Predictor(cfg)

    def forward(self, feature: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Return (z, p) with z = projector(feature) and p = predictor(z)."""
        z = self.projector(feature)
        return z, self.predictor(z)


def project_and_predict(
    feature: torch.Tensor, head: ContrastiveHead
) -> tuple[torch.Tensor, torch.Tensor]:
    return head(feature)


def classify(feature: torch.Tensor, head: ClassifierHead) -> torch.Tensor:
    return head(feature)
