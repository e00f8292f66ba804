"""Training objectives: ID cross-entropy, soft-margin batch-hard triplet, stop-gradient
negative cosine and their weighted combination.

All batch losses are means over the batch (or over mined anchors), so the
balance between the supervised and contrastive terms does not depend on the
batch size.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import torch
import torch.nn.functional as F

from .errors import LossError, ShapeError
from .models import ContrastivePair, FeatureBundle, TripletSet

logger = logging.getLogger(__name__)

COSINE_EPS = 1e-12


@dataclass
class SupervisedTerms:
    """Components of the supervised loss; ``id_local``/``triplet_local`` are group means."""

    id_global: torch.Tensor
    id_local: torch.Tensor
    triplet_global: torch.Tensor
    triplet_local: torch.Tensor

    @property
    def total(self) -> torch.Tensor:
        return self.id_global + self.triplet_global + self.id_local + self.triplet_local


def id_loss(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Cross-entropy without label smoothing, averaged over the batch.

    Raises:
        LossError: If a label falls outside [0, C)
    """
    if logits.dim() == 1:
        logits = logits.unsqueeze(0)
    labels = torch.as_tensor(labels, dtype=torch.long).reshape(-1)
    num_classes = logits.shape[-1]
    if labels.numel() and (int(labels.min()) < 0 or int(labels.max()) >= num_classes):
        raise LossError(f"Labels must lie in [0, {num_classes}), got {labels.tolist()}")
    return F.cross_entropy(logits, labels)


def soft_margin_triplet(triplets: TripletSet) -> torch.Tensor:
    """mean log(1 + exp(|a - p|^2 - |a - n|^2)), evaluated as a softplus."""
    d_ap = (triplets.anchor - triplets.positive).pow(2).sum(dim=-1)
    d_an = (triplets.anchor - triplets.negative).pow(2).sum(dim=-1)
    return F.softplus(d_ap - d_an).mean()


def squared_distances(features: torch.Tensor) -> torch.Tensor:
    """B x B matrix of squared Euclidean distances."""
    diff = features.unsqueeze(1) - features.unsqueeze(0)
    return diff.pow(2).sum(dim=-1)


def mine_indices(
    features: torch.Tensor, labels: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Batch-hard (anchor, positive, negative) row indices.

    Per anchor the positive is the farthest same-label sample and the negative
    the nearest other-label sample; ties go to the lowest index. Anchors
    without a positive or a negative are skipped.

    Raises:
        LossError: If every anchor is skipped
    """
    labels = torch.as_tensor(labels, dtype=torch.long).reshape(-1)
    if features.dim() != 2 or features.shape[0] != labels.numel():
        raise ShapeError(
            f"Expected {labels.numel()} x D features, got {tuple(features.shape)}"
        )

    with torch.no_grad():
        dist = squared_distances(features)
        same = labels.unsqueeze(0) == labels.unsqueeze(1)
        eye = torch.eye(len(labels), dtype=torch.bool, device=features.device)
        positive_mask = same & ~eye
        negative_mask = ~same

        valid = positive_mask.any(dim=1) & negative_mask.any(dim=1)
        if not bool(valid.any()):
            raise LossError("No anchor in the batch has both a positive and a negative")

        neg_inf = torch.full_like(dist, float("-inf"))
        pos_inf = torch.full_like(dist, float("inf"))
        positive = torch.where(positive_mask, dist, neg_inf).argmax(dim=1)
        negative = torch.where(negative_mask, dist, pos_inf).argmin(dim=1)

    anchors = torch.nonzero(valid).reshape(-1)
    skipped = len(labels) - len(anchors)
    if skipped:
        logger.debug(f"Triplet mining skipped {skipped} anchors without a positive or negative")
    return anchors, positive[anchors], negative[anchors]


def gather_triplets(
    features: torch.Tensor, indices: tuple[torch.Tensor, torch.Tensor, torch.Tensor]
) -> TripletSet:
    anchors, positives, negatives = indices
    return TripletSet(
        anchor=features[anchors],
        positive=features[positives],
        negative=features[negatives],
        anchor_index=anchors,
        positive_index=positives,
        negative_index=negatives,
    )


def mine_triplets(features: torch.Tensor, labels: torch.Tensor) -> TripletSet:
    """Batch-hard triplets on raw features; rows keep their gradient path."""
    return gather_triplets(features, mine_indices(features, labels))


def triplet_loss(
    features: torch.Tensor,
    labels: torch.Tensor,
    indices: Optional[tuple[torch.Tensor, torch.Tensor, torch.Tensor]] = None,
    normalize: bool = False,
) -> torch.Tensor:
    """Batch-hard soft-margin triplet loss.

    With ``normalize`` the rows are projected onto the unit sphere before
    mining and scoring, which bounds every squared distance by 4.
    """
    if normalize:
        features = F.normalize(features, dim=-1)
    indices = indices if indices is not None else mine_indices(features, labels)
    return soft_margin_triplet(gather_triplets(features, indices))


def supervised_loss(
    bundle: FeatureBundle,
    logits_global: torch.Tensor,
    logits_local: Sequence[torch.Tensor],
    labels: torch.Tensor,
    mining: str = "per_stream",
    normalize: bool = False,
) -> SupervisedTerms:
    """ID + triplet on the global stream plus the mean of ID + triplet over the K local streams.

    Args:
        bundle: Encoder features of the normal view
        logits_global: B x C logits of the global classifier
        logits_local: K tensors of B x C logits
        labels: B identity labels
        mining: ``per_stream`` mines every stream separately; ``shared`` reuses
            the global stream's triplets for the local streams
        normalize: Score triplets on L2-normalized features
    """
    labels = torch.as_tensor(labels, dtype=torch.long)
    if len(logits_local) != bundle.num_groups:
        raise ShapeError(f"Expected {bundle.num_groups} local logits, got {len(logits_local)}")
    if mining not in ("per_stream", "shared"):
        raise LossError(f"Unknown mining scope '{mining}'")

    global_feature = bundle.global_feature
    if normalize:
        global_feature = F.normalize(global_feature, dim=-1)
    global_indices = mine_indices(global_feature, labels)
    id_global = id_loss(logits_global, labels)
    triplet_global = triplet_loss(global_feature, labels, global_indices)

    id_terms, triplet_terms = [], []
    for k, logits in enumerate(logits_local):
        local = bundle.local_features[:, k]
        indices = global_indices if mining == "shared" else None
        id_terms.append(id_loss(logits, labels))
        triplet_terms.append(triplet_loss(local, labels, indices, normalize=normalize))

    return SupervisedTerms(
        id_global=id_global,
        id_local=torch.stack(id_terms).mean(),
        triplet_global=triplet_global,
        triplet_local=torch.stack(triplet_terms).mean(),
    )


def negative_cosine(p: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
    """-(p . z) / (|p| |z|), averaged over rows.

    Raises:
        LossError: On a zero-norm input row
    """
    if p.shape != z.shape:
        raise ShapeError(f"Cosine inputs differ in shape: {tuple(p.shape)} vs {tuple(z.shape)}")
    if p.dim() == 1:
        p, z = p.unsqueeze(0), z.unsqueeze(0)
    p_norm = p.norm(dim=-1)
    z_norm = z.norm(dim=-1)
    if bool((p_norm == 0).any()) or bool((z_norm == 0).any()):
        raise LossError("Negative cosine is undefined for a zero-norm vector")
    cosine = (p * z).sum(dim=-1) / (p_norm * z_norm).clamp_min(COSINE_EPS)
    return -cosine.mean()


def contrastive_loss(pair: ContrastivePair) -> torch.Tensor:
    """Symmetric negative cosine with stop-gradient on the projector outputs.

    Gradients reach the parameters only through p1 and p2.
    """
    return 0.5 * negative_cosine(pair.p1, pair.z2.detach()) + 0.5 * negative_cosine(
        pair.p2, pair.z1.detach()
    )


Scalar = Union[torch.Tensor, float]


def joint_loss(supervised: Scalar, contrast: Scalar, lam: float) -> Scalar:
    """lam * supervised + (1 - lam) * contrast."""
    if not 0.0 <= lam <= 1.0:
        raise LossError(f"lam must lie in [0, 1], got {lam}")
    return lam * supervised + (1.0 - lam) * contrast
