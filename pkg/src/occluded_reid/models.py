"""Data models for occluded-reid."""

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np
import torch

from .errors import EvaluationError, ShapeError

# H x W x 3 float32 array with values in [0, 1].
ImageBuffer = np.ndarray


class Split(Enum):
    """Dataset split names."""

    TRAIN = "train"
    QUERY = "query"
    GALLERY = "gallery"


@dataclass(frozen=True)
class PersonSample:
    """One labelled person crop.

    Attributes:
        image: H x W x 3 float32 image in [0, 1]
        identity: Dense label 0..C-1 within the split, -1 for junk
        camera: Camera id parsed from the file name
        pid: Identity as written in the file name (shared across splits)
        is_junk: Distractor flag; junk samples never enter training batches
        path: Source file, when loaded from disk
    """

    image: ImageBuffer = field(repr=False)
    identity: int
    camera: int
    pid: int
    is_junk: bool = False
    path: Optional[Path] = None


@dataclass
class IdentityBatch:
    """P identities x K images, grouped per identity in order."""

    samples: list[PersonSample]
    ids_per_batch: int
    images_per_id: int

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def labels(self) -> list[int]:
        return [s.identity for s in self.samples]

    @property
    def cameras(self) -> list[int]:
        return [s.camera for s in self.samples]


class Rect(NamedTuple):
    """Axis-aligned rectangle in pixel coordinates."""

    top: int
    left: int
    height: int
    width: int

    @property
    def area(self) -> int:
        return self.height * self.width


@dataclass
class BinaryMask:
    """Union-of-rectangles occlusion mask.

    Attributes:
        bits: H x W boolean array, True where the image is occluded
        rects: Rectangles in placement order; ``bits`` is their union
        target_area: r * H * W
        shortfall: True when the placement budget ran out before reaching the target
    """

    bits: np.ndarray
    rects: list[Rect] = field(default_factory=list)
    target_area: float = 0.0
    shortfall: bool = False

    @property
    def height(self) -> int:
        return int(self.bits.shape[0])

    @property
    def width(self) -> int:
        return int(self.bits.shape[1])

    @property
    def area(self) -> int:
        return int(np.count_nonzero(self.bits))

    @property
    def fraction(self) -> float:
        return self.area / float(self.bits.size)


@dataclass
class FeatureBundle:
    """Encoder outputs for a batch of images.

    Attributes:
        global_feature: B x D class-token output of the final block
        local_features: B x K x D class-token outputs of the jigsaw groups
        tokens: B x (N+1) x D sequence entering the final block
    """

    global_feature: torch.Tensor
    local_features: torch.Tensor
    tokens: torch.Tensor

    @property
    def num_groups(self) -> int:
        return int(self.local_features.shape[1])


@dataclass
class ContrastivePair:
    """Projector outputs (z) and predictor outputs (p) of the two views."""

    z1: torch.Tensor
    p1: torch.Tensor
    z2: torch.Tensor
    p2: torch.Tensor


@dataclass
class TripletSet:
    """Anchor/positive/negative feature rows, one triplet per row."""

    anchor: torch.Tensor
    positive: torch.Tensor
    negative: torch.Tensor
    anchor_index: Optional[torch.Tensor] = None
    positive_index: Optional[torch.Tensor] = None
    negative_index: Optional[torch.Tensor] = None

    def __post_init__(self) -> None:
        shapes = {tuple(self.anchor.shape), tuple(self.positive.shape), tuple(self.negative.shape)}
        if len(shapes) != 1:
            raise ShapeError(f"Triplet features must share one shape, got {sorted(shapes)}")

    def __len__(self) -> int:
        return int(self.anchor.shape[0]) if self.anchor.dim() > 1 else 1


@dataclass
class LossBreakdown:
    """Scalar loss terms of one training step, as logged."""

    step: int
    id_global: float
    id_local: float
    triplet_global: float
    triplet_local: float
    supervised: float
    contrast: float
    total: float
    lr: float

    def as_log_line(self) -> str:
        return (
            f"step={self.step} id_global={self.id_global:.6f} id_local={self.id_local:.6f} "
            f"triplet_global={self.triplet_global:.6f} triplet_local={self.triplet_local:.6f} "
            f"supervised={self.supervised:.6f} contrast={self.contrast:.6f} "
            f"loss={self.total:.6f} lr={self.lr:.8f}"
        )


@dataclass
class EmbeddingSet:
    """Unit-norm retrieval features with their identities, cameras and junk flags."""

    features: np.ndarray
    identities: np.ndarray
    cameras: np.ndarray
    junk: np.ndarray

    @classmethod
    def from_features(
        cls,
        features: np.ndarray,
        identities: list[int],
        cameras: list[int],
        junk: Optional[list[bool]] = None,
    ) -> "EmbeddingSet":
        """L2-normalize ``features`` row-wise and build the set.

        Raises:
            EvaluationError: On empty input, mismatched lengths or zero-norm rows
        """
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] == 0:
            raise EvaluationError(
                f"Expected a non-empty n x D feature matrix, got {features.shape}"
            )
        n = features.shape[0]
        junk = junk if junk is not None else [False] * n
        if not (len(identities) == len(cameras) == len(junk) == n):
            raise EvaluationError("Feature rows and their labels differ in length")

        norms = np.linalg.norm(features, axis=1, keepdims=True)
        if np.any(norms == 0) or not np.all(np.isfinite(norms)):
            raise EvaluationError("Cannot normalize a zero-norm or non-finite feature")

        return cls(
            features=features / norms,
            identities=np.asarray(identities, dtype=np.int64),
            cameras=np.asarray(cameras, dtype=np.int64),
            junk=np.asarray(junk, dtype=bool),
        )

    def __len__(self) -> int:
        return int(self.features.shape[0])


@dataclass
class RankingResult:
    """Per-query gallery ranking after protocol filtering.

    ``order[q]`` lists kept gallery indices by ascending distance (ties by
    index); ``matches[q]`` flags true matches along that order.
    """

    order: list[np.ndarray]
    matches: list[np.ndarray]


@dataclass
class RetrievalMetrics:
    """mAP, CMC and exclusion counts of one evaluation."""

    mean_ap: float
    cmc: np.ndarray
    num_queries: int
    num_excluded: int

    @property
    def rank1(self) -> float:
        return float(self.cmc[0])

    def rank(self, k: int) -> float:
        return float(self.cmc[min(k, len(self.cmc)) - 1])
