"""Joint supervised and self-supervised training loop."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Optional

import numpy as np
import torch

from .augment import normal_pipeline, strong_pipeline
from .checkpoint import load_checkpoint, save_checkpoint
from .config import TrainConfig
from .encoder import images_to_tensor
from .errors import ConfigurationError, DatasetError, NonFiniteLossError
from .imaging import IdentitySampler, sample_batch
from .losses import contrastive_loss, joint_loss, supervised_loss
from .models import ContrastivePair, IdentityBatch, ImageBuffer, LossBreakdown, PersonSample
from .network import ReIDNetwork, init_parameters
from .optim import build_optimizer, global_norm, scheduled_lr, sgd_step
from .validator import ensure_valid

logger = logging.getLogger(__name__)

NORMAL_BRANCH = 0
STRONG_BRANCH = 1
LOG_NAME = "train.log"
FINAL_CHECKPOINT = "checkpoint.pt"


def image_rng(seed: int, step: int, index: int, branch: int) -> np.random.Generator:
    """Independent generator per (step, image, branch) so augmentation order never matters."""
    return np.random.default_rng([seed, step, index, branch])


def augment_batch(
    images: list[ImageBuffer],
    cfg: TrainConfig,
    step: int,
    branch: int,
    executor: Optional[ThreadPoolExecutor] = None,
) -> list[ImageBuffer]:
    def work(index: int) -> ImageBuffer:
        rng = image_rng(cfg.seed, step, index, branch)
        if branch == NORMAL_BRANCH:
            return normal_pipeline(images[index], rng, cfg.normal_aug)
        return strong_pipeline(images[index], cfg.strong_aug, rng)

    indices = range(len(images))
    if executor is None:
        return [work(i) for i in indices]
    return list(executor.map(work, indices))


@contextmanager
def deterministic_torch(seed: int) -> Iterator[None]:
    """Deterministic kernels and a seeded global RNG inside the block only.

    The caller's deterministic-algorithms flag and global torch RNG state are
    restored on exit.
    """
    previous = torch.are_deterministic_algorithms_enabled()
    torch.use_deterministic_algorithms(True)
    try:
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            yield
    finally:
        torch.use_deterministic_algorithms(previous)


def _dump_non_finite(
    network: ReIDNetwork, step: int, loss: torch.Tensor
) -> NonFiniteLossError:
    params = [p for p in network.parameters()]
    return NonFiniteLossError(
        step=step,
        loss=float(loss.detach()),
        param_norm=global_norm(params),
        grad_norm=global_norm(p.grad for p in params),
    )


def train_step(
    batch: IdentityBatch,
    network: ReIDNetwork,
    optimizer: torch.optim.Optimizer,
    cfg: TrainConfig,
    step: int,
    lr: float,
    executor: Optional[ThreadPoolExecutor] = None,
) -> LossBreakdown:
    """One joint update.

    The normal view feeds the global and jigsaw heads; both views feed the
    projector/predictor through the same encoder. The weighted loss is
    backpropagated and one SGD step is taken at ``lr``.

    Raises:
        NonFiniteLossError: If the loss or a gradient is not finite; parameters are untouched
    """
    images = [s.image for s in batch.samples]
    labels = torch.tensor(batch.labels, dtype=torch.long)
    cameras = torch.tensor(batch.cameras, dtype=torch.long)

    network.train()
    normal = images_to_tensor(augment_batch(images, cfg, step, NORMAL_BRANCH, executor))
    out = network.forward_supervised(normal, cameras)
    terms = supervised_loss(
        out.bundle,
        out.logits_global,
        out.logits_local,
        labels,
        cfg.loss.mining,
        normalize=cfg.loss.normalize_triplet,
    )

    if cfg.strong_aug.enabled:
        strong = images_to_tensor(augment_batch(images, cfg, step, STRONG_BRANCH, executor))
        z1, p1 = network.forward_contrastive(out.bundle.tokens)
        z2, p2 = network.forward_contrastive(network.contrastive_tokens(strong, cameras))
        contrast = contrastive_loss(ContrastivePair(z1=z1, p1=p1, z2=z2, p2=p2))
        total = joint_loss(terms.total, contrast, cfg.loss.lam)
    else:
        contrast = torch.zeros(())
        total = terms.total

    optimizer.zero_grad(set_to_none=True)
    if not torch.isfinite(total):
        raise _dump_non_finite(network, step, total)
    total.backward()
    grads = [p.grad for p in network.parameters() if p.grad is not None]
    if any(not torch.isfinite(g).all() for g in grads):
        raise _dump_non_finite(network, step, total)
    sgd_step(optimizer, lr)

    return LossBreakdown(
        step=step,
        id_global=terms.id_global.detach().item(),
        id_local=terms.id_local.detach().item(),
        triplet_global=terms.triplet_global.detach().item(),
        triplet_local=terms.triplet_local.detach().item(),
        supervised=terms.total.detach().item(),
        contrast=contrast.detach().item(),
        total=total.detach().item(),
        lr=lr,
    )


@dataclass
class TrainResult:
    network: ReIDNetwork
    run_dir: Path
    checkpoint_path: Path
    log_path: Path
    history: list[LossBreakdown] = field(default_factory=list)


def _training_samples(dataset: list[PersonSample]) -> list[PersonSample]:
    samples = [s for s in dataset if not s.is_junk]
    if not samples:
        raise DatasetError("Training set has no labelled samples")
    return samples


def _check_dataset(samples: list[PersonSample], cfg: TrainConfig) -> int:
    identities = sorted({s.identity for s in samples})
    if identities != list(range(len(identities))):
        raise DatasetError("Training identities must be dense labels 0..C-1")
    if len(identities) < cfg.ids_per_batch:
        raise DatasetError(
            f"Batch needs {cfg.ids_per_batch} identities but the training set has {len(identities)}"
        )
    cameras = {s.camera for s in samples}
    if min(cameras) < 0 or max(cameras) >= cfg.encoder.num_cameras:
        raise ConfigurationError(
            f"Camera ids {sorted(cameras)} do not fit encoder.num_cameras={cfg.encoder.num_cameras}"
        )
    expected = (cfg.encoder.image_height, cfg.encoder.image_width)
    sizes = {tuple(s.image.shape[:2]) for s in samples}
    if sizes != {expected}:
        raise DatasetError(
            f"Training images must be {expected[0]}x{expected[1]}, got {sorted(sizes)}"
        )
    return len(identities)


def train(
    dataset: list[PersonSample],
    cfg: TrainConfig,
    run_dir: Path,
    resume: Optional[Path] = None,
    on_step: Optional[Callable[[LossBreakdown], None]] = None,
) -> TrainResult:
    """Train from scratch (or from ``resume``) and write checkpoints and ``train.log``.

    Checkpoints land in ``run_dir`` every ``checkpoint_interval`` epochs as
    ``checkpoint_epoch<NNNN>.pt`` and at the end as ``checkpoint.pt``. Each
    epoch draws its batches from a sampler seeded by (seed, epoch), so a
    resumed run continues exactly where the interrupted one stopped.

    Args:
        dataset: Training samples with dense identity labels
        cfg: Resolved configuration
        run_dir: Output directory
        resume: Checkpoint to continue from
        on_step: Called with every step's loss breakdown

    Returns:
        TrainResult with the trained network and output paths

    Raises:
        ConfigurationError: On an invalid configuration
        DatasetError: If the dataset cannot fill a batch
        NonFiniteLossError: If training diverges
    """
    ensure_valid(cfg)
    samples = _training_samples(dataset)
    num_classes = _check_dataset(samples, cfg)

    with deterministic_torch(cfg.seed):
        return _fit(samples, num_classes, cfg, Path(run_dir), resume, on_step)


def _fit(
    samples: list[PersonSample],
    num_classes: int,
    cfg: TrainConfig,
    run_dir: Path,
    resume: Optional[Path],
    on_step: Optional[Callable[[LossBreakdown], None]],
) -> TrainResult:
    run_dir.mkdir(parents=True, exist_ok=True)
    cfg.save_yaml(run_dir / "config.yaml")
    log_path = run_dir / LOG_NAME

    start_epoch, step = 0, 0
    if resume is not None:
        checkpoint = load_checkpoint(resume)
        if checkpoint.num_classes != num_classes:
            raise DatasetError(
                f"Checkpoint was trained on {checkpoint.num_classes} identities, "
                f"dataset has {num_classes}"
            )
        network = checkpoint.build_network()
        optimizer = build_optimizer(network, cfg)
        if checkpoint.optimizer is not None:
            optimizer.load_state_dict(checkpoint.optimizer)
        start_epoch, step = checkpoint.epoch, checkpoint.step
        logger.info(f"Resuming from {resume} at epoch {start_epoch}, step {step}")
    else:
        network = init_parameters(cfg, num_classes, cfg.seed)
        optimizer = build_optimizer(network, cfg)

    steps_per_epoch = math.ceil(num_classes / cfg.ids_per_batch)
    total_steps = cfg.epochs * steps_per_epoch
    warmup_steps = cfg.warmup_epochs * steps_per_epoch
    logger.info(
        f"Training {num_classes} identities, {len(samples)} images: "
        f"{cfg.epochs} epochs x {steps_per_epoch} steps"
    )

    history: list[LossBreakdown] = []
    executor = ThreadPoolExecutor(max_workers=cfg.workers) if cfg.workers > 0 else None
    checkpoint_path = run_dir / FINAL_CHECKPOINT
    try:
        with open(log_path, "a" if resume is not None else "w") as log:
            for epoch in range(start_epoch, cfg.epochs):
                sampler = IdentitySampler(
                    samples,
                    cfg.ids_per_batch,
                    cfg.images_per_id,
                    np.random.default_rng([cfg.seed, epoch]),
                )
                epoch_losses = []
                for _ in range(steps_per_epoch):
                    lr = scheduled_lr(step, total_steps, warmup_steps, cfg.base_lr, cfg.min_lr)
                    batch = sample_batch(samples, cfg.ids_per_batch, cfg.images_per_id, sampler)
                    breakdown = train_step(batch, network, optimizer, cfg, step, lr, executor)
                    log.write(breakdown.as_log_line() + "\n")
                    logger.debug(breakdown.as_log_line())
                    history.append(breakdown)
                    epoch_losses.append(breakdown.total)
                    if on_step is not None:
                        on_step(breakdown)
                    step += 1

                logger.info(
                    f"Epoch {epoch + 1}/{cfg.epochs}: "
                    f"mean loss {np.mean(epoch_losses):.4f}, lr {lr:.6f}"
                )
                if cfg.checkpoint_interval and (epoch + 1) % cfg.checkpoint_interval == 0:
                    save_checkpoint(
                        run_dir / f"checkpoint_epoch{epoch + 1:04d}.pt",
                        network, cfg, optimizer, step=step, epoch=epoch + 1,
                    )
    finally:
        if executor is not None:
            executor.shutdown()

    save_checkpoint(checkpoint_path, network, cfg, optimizer, step=step, epoch=cfg.epochs)
    return TrainResult(
        network=network,
        run_dir=run_dir,
        checkpoint_path=checkpoint_path,
        log_path=log_path,
        history=history,
    )
