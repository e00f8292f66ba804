"""occluded-reid - Occluded person re-identification with joint supervised and
self-supervised transformer training.

The package pairs an identity-supervised transformer (global and jigsaw
heads, ID and triplet losses) with a stop-gradient contrastive branch fed by
an occlusion-simulating augmentation, and evaluates the result with mAP and
CMC under the standard re-identification protocol.

Example:
    >>> from pathlib import Path
    >>> from occluded_reid import TrainConfig, generate_synthetic_dataset, held_in_split, train
    >>> from occluded_reid import evaluate_network
    >>>
    >>> config = TrainConfig.toy()
    >>> data = generate_synthetic_dataset(10, 8, 4, seed=7, size=(32, 32))
    >>> result = train(data, config, Path("runs/demo"))
    >>> query, gallery = held_in_split(data)
    >>> print(evaluate_network(result.network, query, gallery).rank1)

Configuration can also come from YAML:
    >>> config = TrainConfig.from_yaml(Path("reid_config.yaml"), base=TrainConfig.toy())
"""

from .augment import (
    apply_mask,
    baseline_occluders,
    color_jitter,
    gaussian_blur,
    normal_pipeline,
    random_rectangle_mask,
    solarize,
    strong_pipeline,
)
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import (
    EncoderConfig,
    HeadConfig,
    LossConfig,
    MaskSpec,
    NormalAugConfig,
    StrongAugConfig,
    TrainConfig,
)
from .encoder import Encoder, build_encoder
from .errors import (
    AugmentationError,
    CheckpointError,
    ConfigurationError,
    DatasetError,
    EvaluationError,
    LossError,
    NonFiniteLossError,
    ReIDError,
    ShapeError,
)
from .gradcheck import GradcheckReport, run_gradcheck
from .heads import ClassifierHead, ContrastiveHead
from .imaging import (
    IdentitySampler,
    generate_synthetic_dataset,
    held_in_split,
    load_dataset,
    sample_batch,
    write_dataset,
)
from .losses import (
    contrastive_loss,
    id_loss,
    joint_loss,
    mine_triplets,
    negative_cosine,
    soft_margin_triplet,
    supervised_loss,
)
from .models import (
    BinaryMask,
    ContrastivePair,
    EmbeddingSet,
    FeatureBundle,
    IdentityBatch,
    LossBreakdown,
    PersonSample,
    RankingResult,
    RetrievalMetrics,
    Split,
    TripletSet,
)
from .network import ReIDNetwork, init_parameters
from .optim import build_optimizer, cosine_lr, sgd_step
from .retrieval import distance_matrix, evaluate, evaluate_network, extract_embeddings
from .sweeps import SWEEPS, run_sweep
from .trainer import TrainResult, train, train_step
from .validator import ensure_valid, validate_train_config

__version__ = "0.1.0"

__all__ = [
    # Configuration
    "TrainConfig",
    "EncoderConfig",
    "HeadConfig",
    "LossConfig",
    "MaskSpec",
    "NormalAugConfig",
    "StrongAugConfig",
    "ensure_valid",
    "validate_train_config",
    # Data
    "PersonSample",
    "IdentityBatch",
    "Split",
    "load_dataset",
    "generate_synthetic_dataset",
    "write_dataset",
    "held_in_split",
    "IdentitySampler",
    "sample_batch",
    # Augmentation
    "BinaryMask",
    "random_rectangle_mask",
    "apply_mask",
    "gaussian_blur",
    "color_jitter",
    "solarize",
    "normal_pipeline",
    "strong_pipeline",
    "baseline_occluders",
    # Model
    "Encoder",
    "build_encoder",
    "ClassifierHead",
    "ContrastiveHead",
    "ReIDNetwork",
    "init_parameters",
    "FeatureBundle",
    "ContrastivePair",
    "TripletSet",
    # Losses and optimization
    "id_loss",
    "soft_margin_triplet",
    "mine_triplets",
    "supervised_loss",
    "negative_cosine",
    "contrastive_loss",
    "joint_loss",
    "build_optimizer",
    "sgd_step",
    "cosine_lr",
    # Training and evaluation
    "train",
    "train_step",
    "TrainResult",
    "LossBreakdown",
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
    "EmbeddingSet",
    "RankingResult",
    "RetrievalMetrics",
    "extract_embeddings",
    "distance_matrix",
    "evaluate",
    "evaluate_network",
    "run_gradcheck",
    "GradcheckReport",
    "SWEEPS",
    "run_sweep",
    # Exceptions
    "ReIDError",
    "ConfigurationError",
    "DatasetError",
    "ShapeError",
    "AugmentationError",
    "LossError",
    "NonFiniteLossError",
    "CheckpointError",
    "EvaluationError",
]
