"""Finite-difference verification of the training objectives at float64.

Four objectives are checked against every trainable parameter tensor they
reach: the triplet loss on the global feature, the supervised loss, the
contrastive loss and the joint loss. For the contrastive and joint losses the
reference function holds the projector outputs z constant at their current
values, which is the function whose gradient the stop-gradient defines.

Per tensor the analytic gradient is compared with a central difference along
one random unit direction and at a few sampled coordinates.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import torch

from .augment import strong_pipeline
from .config import TrainConfig
from .encoder import images_to_tensor
from .imaging import generate_synthetic_dataset
from .losses import contrastive_loss, joint_loss, negative_cosine, supervised_loss, triplet_loss
from .models import ContrastivePair
from .network import ReIDNetwork, init_parameters

logger = logging.getLogger(__name__)

DEFAULT_EPS = 1e-5
DEFAULT_TOLERANCE = 1e-4
# Relative errors use max(|analytic|, |numeric|, floor) as denominator.
ERROR_FLOOR = 1e-4
OBJECTIVES = ("triplet", "supervised", "contrastive", "joint")

LossFn = Callable[[], torch.Tensor]


@dataclass
class GradcheckRow:
    objective: str
    group: str
    worst: float
    checked: int


@dataclass
class GradcheckReport:
    """Worst relative error per (objective, parameter group) plus the structural checks."""

    rows: list[GradcheckRow] = field(default_factory=list)
    tolerance: float = DEFAULT_TOLERANCE
    frozen_untouched: bool = True
    stop_gradient_max: float = 0.0

    @property
    def worst(self) -> float:
        return max((row.worst for row in self.rows), default=0.0)

    @property
    def passed(self) -> bool:
        return (
            bool(self.rows)
            and self.worst < self.tolerance
            and self.frozen_untouched
            and self.stop_gradient_max <= 1e-12
        )

    def worst_by_group(self) -> dict[str, float]:
        worst: dict[str, float] = defaultdict(float)
        for row in self.rows:
            worst[row.group] = max(worst[row.group], row.worst)
        return dict(worst)

    def format(self) -> str:
        lines = [f"{'objective':<12} {'group':<28} {'checks':>6} {'worst rel err':>14}"]
        for row in self.rows:
            lines.append(f"{row.objective:<12} {row.group:<28} {row.checked:>6} {row.worst:>14.3e}")
        lines.append(f"frozen patch projection untouched: {self.frozen_untouched}")
        lines.append(f"max gradient through stopped z: {self.stop_gradient_max:.3e}")
        lines.append(f"{'PASS' if self.passed else 'FAIL'} (tolerance {self.tolerance:g})")
        return "\n".join(lines)


def relative_error(analytic: float, numeric: float, floor: float = ERROR_FLOOR) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def parameter_group(name: str) -> str:
    """Coarse group of a parameter name, e.g. ``encoder.blocks`` or ``contrastive.projector``."""
    parts = name.split(".")
    if parts[0] == "encoder":
        if parts[1] in ("cls_token", "pos_embed", "sie_embed"):
            return "encoder.embeddings"
        return f"encoder.{parts[1]}"
    return ".".join(parts[:2])


def stop_gradient_leak(dim: int = 8, seed: int = 0) -> float:
    """Largest gradient magnitude that reaches z through the contrastive loss (expected 0)."""
    gen = torch.Generator().manual_seed(seed)
    tensors = [torch.randn(3, dim, generator=gen, dtype=torch.float64) for _ in range(4)]
    z1, p1, z2, p2 = [t.requires_grad_(True) for t in tensors]
    contrastive_loss(ContrastivePair(z1=z1, p1=p1, z2=z2, p2=p2)).backward()
    leaks = [0.0 if z.grad is None else float(z.grad.abs().max()) for z in (z1, z2)]
    return max(leaks)


class _Problem:
    """Fixed float64 batch, network and objective closures."""

    def __init__(self, cfg: TrainConfig, seed: int, ids: int, images_per_id: int):
        size = (cfg.encoder.image_height, cfg.encoder.image_width)
        samples = generate_synthetic_dataset(
            max(2, ids), max(2, images_per_id), min(2, cfg.encoder.num_cameras), seed, size=size
        )
        rng = np.random.default_rng(seed)
        strong = [strong_pipeline(s.image, cfg.strong_aug, rng) for s in samples]

        self.network: ReIDNetwork = init_parameters(cfg, len({s.identity for s in samples}), seed)
        self.network.double().train()
        self.normal = images_to_tensor([s.image for s in samples]).double()
        self.strong = images_to_tensor(strong).double()
        self.cameras = torch.tensor([s.camera for s in samples], dtype=torch.long)
        self.labels = torch.tensor([s.identity for s in samples], dtype=torch.long)
        self.lam = cfg.loss.lam
        self.mining = cfg.loss.mining
        self.normalize = cfg.loss.normalize_triplet

    def supervised(self) -> torch.Tensor:
        out = self.network.forward_supervised(self.normal, self.cameras)
        return supervised_loss(
            out.bundle,
            out.logits_global,
            out.logits_local,
            self.labels,
            self.mining,
            normalize=self.normalize,
        ).total

    def triplet(self) -> torch.Tensor:
        bundle = self.network.encoder(self.normal, self.cameras)
        return triplet_loss(bundle.global_feature, self.labels, normalize=self.normalize)

    def pair(self) -> ContrastivePair:
        z1, p1 = self.network.forward_contrastive(
            self.network.contrastive_tokens(self.normal, self.cameras)
        )
        z2, p2 = self.network.forward_contrastive(
            self.network.contrastive_tokens(self.strong, self.cameras)
        )
        return ContrastivePair(z1=z1, p1=p1, z2=z2, p2=p2)

    def contrastive(self) -> torch.Tensor:
        return contrastive_loss(self.pair())

    def joint(self) -> torch.Tensor:
        return joint_loss(self.supervised(), self.contrastive(), self.lam)

    def frozen_z(self) -> LossFn:
        """Contrastive reference with z fixed at the current parameters."""
        with torch.no_grad():
            fixed = self.pair()
        z1, z2 = fixed.z1.clone(), fixed.z2.clone()

        def reference() -> torch.Tensor:
            pair = self.pair()
            return 0.5 * negative_cosine(pair.p1, z2) + 0.5 * negative_cosine(pair.p2, z1)

        return reference

    def objectives(self) -> dict[str, tuple[LossFn, LossFn]]:
        """name -> (loss used for the analytic gradient, reference for finite differences)."""
        contrast_ref = self.frozen_z()

        def joint_ref() -> torch.Tensor:
            return joint_loss(self.supervised(), contrast_ref(), self.lam)

        return {
            "triplet": (self.triplet, self.triplet),
            "supervised": (self.supervised, self.supervised),
            "contrastive": (self.contrastive, contrast_ref),
            "joint": (self.joint, joint_ref),
        }


def _central_difference(
    reference: LossFn, param: torch.nn.Parameter, direction: torch.Tensor, eps: float
) -> float:
    original = param.detach().clone()
    with torch.no_grad():
        param.copy_(original + eps * direction)
        plus = float(reference())
        param.copy_(original - eps * direction)
        minus = float(reference())
        param.copy_(original)
    return (plus - minus) / (2.0 * eps)


def run_gradcheck(
    cfg: Optional[TrainConfig] = None,
    seed: int = 0,
    eps: float = DEFAULT_EPS,
    tolerance: float = DEFAULT_TOLERANCE,
    coords_per_tensor: int = 2,
    ids: int = 4,
    images_per_id: int = 2,
    objectives: tuple[str, ...] = OBJECTIVES,
) -> GradcheckReport:
    """Compare analytic and finite-difference gradients for every trainable tensor.

    Args:
        cfg: Configuration to check; the toy configuration when omitted
        seed: Seed for data, initialization and sampled directions
        eps: Central-difference step
        tolerance: Pass threshold on the worst relative error
        coords_per_tensor: Sampled coordinates per tensor, besides one random direction
        ids: Identities in the check batch
        images_per_id: Images per identity in the check batch
        objectives: Subset of ``OBJECTIVES`` to run

    Returns:
        GradcheckReport
    """
    cfg = cfg or TrainConfig.toy()
    problem = _Problem(cfg, seed, ids, images_per_id)
    network = problem.network
    rng = torch.Generator().manual_seed(seed)
    report = GradcheckReport(tolerance=tolerance)
    frozen = [p for n, p in network.named_parameters() if n.startswith("encoder.patch_embed")]

    for name, (loss_fn, reference) in problem.objectives().items():
        if name not in objectives:
            continue
        network.zero_grad(set_to_none=True)
        loss_fn().backward()
        if cfg.encoder.freeze_patch_projection and any(p.grad is not None for p in frozen):
            report.frozen_untouched = False

        worst: dict[str, float] = defaultdict(float)
        counts: dict[str, int] = defaultdict(int)
        for pname, param in network.named_parameters():
            if not param.requires_grad or param.grad is None:
                continue
            grad = param.grad.detach().clone()
            group = parameter_group(pname)

            direction = torch.randn(param.shape, generator=rng, dtype=param.dtype)
            direction /= direction.norm().clamp_min(1e-12)
            directions = [direction]
            flat = torch.randperm(param.numel(), generator=rng)[:coords_per_tensor]
            for index in flat.tolist():
                unit = torch.zeros(param.numel(), dtype=param.dtype)
                unit[index] = 1.0
                directions.append(unit.reshape(param.shape))

            for d in directions:
                analytic = float((grad * d).sum())
                numeric = _central_difference(reference, param, d, eps)
                err = relative_error(analytic, numeric)
                worst[group] = max(worst[group], err)
                counts[group] += 1
                if err >= tolerance:
                    logger.warning(
                        f"{name}: {pname} analytic {analytic:.6e} vs numeric {numeric:.6e} "
                        f"(rel err {err:.2e})"
                    )

        for group in sorted(worst):
            report.rows.append(GradcheckRow(name, group, worst[group], counts[group]))

    report.stop_gradient_max = stop_gradient_leak(seed=seed)
    logger.info(f"Gradient check worst relative error {report.worst:.3e}")
    return report
