"""The complete model: shared encoder, supervised heads and contrastive head."""

import logging
from dataclasses import dataclass

import torch
from torch import nn

from .config import TrainConfig
from .encoder import Encoder, init_weights
from .heads import ContrastiveHead, SupervisedHeads
from .models import FeatureBundle

logger = logging.getLogger(__name__)


@dataclass
class SupervisedOutput:
    bundle: FeatureBundle
    logits_global: torch.Tensor
    logits_local: list[torch.Tensor]


class ReIDNetwork(nn.Module):
    """Encoder plus heads; every branch reads the same parameters.

    Example:
        >>> net = init_parameters(TrainConfig.toy(), num_classes=10, seed=0)
        >>> out = net.forward_supervised(images, cameras)
        >>> z, p = net.forward_contrastive(out.bundle.tokens)
    """

    def __init__(self, cfg: TrainConfig, num_classes: int):
        super().__init__()
        dim = cfg.encoder.embed_dim
        self.num_classes = num_classes
        self.eval_feature = cfg.heads.eval_feature
        self.encoder = Encoder(cfg.encoder)
        self.id_heads = SupervisedHeads(dim, num_classes, cfg.encoder.jigsaw_groups, cfg.heads)
        self.contrastive = ContrastiveHead(dim, cfg.heads)

    def forward_supervised(self, images: torch.Tensor, cameras: torch.Tensor) -> SupervisedOutput:
        bundle = self.encoder(images, cameras)
        logits_global, logits_local = self.id_heads(bundle.global_feature, bundle.local_features)
        return SupervisedOutput(bundle, logits_global, logits_local)

    def forward_contrastive(self, tokens: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Project and predict from the class token of the pre-final sequence."""
        return self.contrastive(tokens[:, 0])

    def contrastive_tokens(self, images: torch.Tensor, cameras: torch.Tensor) -> torch.Tensor:
        return self.encoder.forward_backbone(images, cameras)

    def retrieval_features(self, images: torch.Tensor, cameras: torch.Tensor) -> torch.Tensor:
        """Unnormalized retrieval feature: f_g, or f_g concatenated with the mean local feature."""
        bundle = self.encoder(images, cameras)
        if self.eval_feature == "global":
            return bundle.global_feature
        return torch.cat([bundle.global_feature, bundle.local_features.mean(dim=1)], dim=1)

    def classifier_parameters(self) -> list[nn.Parameter]:
        heads = [self.id_heads.global_head, *self.id_heads.local_heads]
        return [head.classifier.weight for head in heads]


def init_parameters(cfg: TrainConfig, num_classes: int, seed: int) -> ReIDNetwork:
    """Build a network with deterministic initial weights.

    Global torch RNG state is left untouched, so initialization never perturbs
    the caller's random streams.
    """
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        network = ReIDNetwork(cfg, num_classes)
        init_weights(network, cfg.encoder.init_std)
    logger.debug(
        f"Initialized network: {sum(p.numel() for p in network.parameters())} parameters, "
        f"{num_classes} classes"
    )
    return network

