"""Transformer feature extractor with side-information embedding and the jigsaw patch module.

The encoder runs ``depth - 1`` pre-norm blocks over the patch sequence and
shares its final block between two consumers: the global branch (whole
sequence) and the jigsaw branch (K shifted, interleaved groups of patches,
each with the class token prepended).
"""

import logging
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .config import EncoderConfig
from .errors import ShapeError
from .models import FeatureBundle, ImageBuffer

logger = logging.getLogger(__name__)

INIT_STD = 0.02
LAYER_NORM_EPS = 1e-6


def images_to_tensor(images: Sequence[ImageBuffer]) -> torch.Tensor:
    """Stack H x W x 3 buffers into a B x 3 x H x W float32 tensor."""
    if len(images) == 0:
        raise ShapeError("Cannot build a batch from zero images")
    shapes = {np.shape(img) for img in images}
    if len(shapes) != 1:
        raise ShapeError(f"Images in a batch must share one shape, got {sorted(shapes)}")
    stacked = np.stack([np.asarray(img, dtype=np.float32) for img in images])
    if stacked.ndim != 4 or stacked.shape[-1] != 3:
        raise ShapeError(f"Expected H x W x 3 images, got {stacked.shape[1:]}")
    return torch.from_numpy(np.ascontiguousarray(stacked.transpose(0, 3, 1, 2)))


def jigsaw_groups(num_patches: int, groups: int, shift: int) -> list[list[int]]:
    """Patch indices of each jigsaw group.

    The sequence is rotated left by ``shift`` and position i of the rotated
    sequence joins group i mod ``groups``.

    Example:
        >>> jigsaw_groups(8, 4, 1)
        [[1, 5], [2, 6], [3, 7], [4, 0]]
    """
    if groups < 1 or groups > num_patches:
        raise ShapeError(f"Cannot split {num_patches} patches into {groups} groups")
    rotated = [(i + shift) % num_patches for i in range(num_patches)]
    return [rotated[k::groups] for k in range(groups)]


class PatchEmbed(nn.Module):
    """Linear projection of p x p patches taken at stride s.

    Implemented as a convolution with kernel p and stride s, which is the
    flatten-then-project map applied at every window position.
    """

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.image_size = (cfg.image_height, cfg.image_width)
        self.grid = cfg.grid
        self.num_patches = cfg.num_patches
        self.proj = nn.Conv2d(3, cfg.embed_dim, kernel_size=cfg.patch_size, stride=cfg.stride)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        if images.dim() != 4 or images.shape[1] != 3 or tuple(images.shape[2:]) != self.image_size:
            raise ShapeError(
                f"Expected B x 3 x {self.image_size[0]} x {self.image_size[1]} images, "
                f"got {tuple(images.shape)}"
            )
        return self.proj(images).flatten(2).transpose(1, 2)


class Attention(nn.Module):
    def __init__(self, dim: int, num_heads: int):
        super().__init__()
        if dim % num_heads != 0:
            raise ShapeError(f"embed_dim {dim} is not divisible by num_heads {num_heads}")
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.scale = self.head_dim**-0.5
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        batch, length, dim = x.shape
        qkv = self.qkv(x).reshape(batch, length, 3, self.num_heads, self.head_dim)
        q, k, v = qkv.permute(2, 0, 3, 1, 4)
        attn = (q @ k.transpose(-2, -1)) * self.scale
        attn = attn.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(batch, length, dim)
        return self.proj(out)


class Block(nn.Module):
    """Pre-norm transformer block: x + MHSA(LN(x)), then x + MLP(LN(x))."""

    def __init__(self, dim: int, num_heads: int, mlp_ratio: float):
        super().__init__()
        hidden = int(dim * mlp_ratio)
        self.norm1 = nn.LayerNorm(dim, eps=LAYER_NORM_EPS)
        self.attn = Attention(dim, num_heads)
        self.norm2 = nn.LayerNorm(dim, eps=LAYER_NORM_EPS)
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.fc2(F.gelu(self.fc1(self.norm2(x))))


class Encoder(nn.Module):
    """Shared encoder used by both augmentation branches.

    Example:
        >>> encoder = Encoder(EncoderConfig(image_height=32, image_width=32, patch_size=8,
        ...                                 stride=8, embed_dim=32, depth=4, num_heads=4))
        >>> bundle = encoder(torch.zeros(2, 3, 32, 32), torch.tensor([0, 1]))
        >>> bundle.local_features.shape
        torch.Size([2, 4, 32])
    """

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        if cfg.depth < 2:
            raise ShapeError(f"Encoder depth must be at least 2, got {cfg.depth}")
        self.cfg = cfg
        dim = cfg.embed_dim

        self.patch_embed = PatchEmbed(cfg)
        self.cls_token = nn.Parameter(torch.zeros(1, 1, dim))
        self.pos_embed = nn.Parameter(torch.zeros(1, cfg.num_patches + 1, dim))
        self.sie_embed = nn.Parameter(torch.zeros(cfg.num_cameras, dim))
        self.blocks = nn.ModuleList(
            Block(dim, cfg.num_heads, cfg.mlp_ratio) for _ in range(cfg.depth - 1)
        )
        self.last_block = Block(dim, cfg.num_heads, cfg.mlp_ratio)
        self.norm = nn.LayerNorm(dim, eps=LAYER_NORM_EPS)
        self.groups = jigsaw_groups(cfg.num_patches, cfg.jigsaw_groups, cfg.jigsaw_shift)

        self.set_patch_projection_frozen(cfg.freeze_patch_projection)

    def set_patch_projection_frozen(self, frozen: bool) -> None:
        for param in self.patch_embed.parameters():
            param.requires_grad_(not frozen)

    @property
    def num_patches(self) -> int:
        return self.patch_embed.num_patches

    def patch_embed_images(self, images: torch.Tensor) -> torch.Tensor:
        """B x 3 x H x W images to B x N x D patch embeddings."""
        return self.patch_embed(images)

    def forward_backbone(self, images: torch.Tensor, cameras: torch.Tensor) -> torch.Tensor:
        """Embed, add class/position/camera embeddings and run the first depth - 1 blocks.

        Args:
            images: B x 3 x H x W batch
            cameras: B camera ids in [0, num_cameras)

        Returns:
            B x (N+1) x D sequence entering the final block

        Raises:
            ShapeError: On a size mismatch or an out-of-range camera id
        """
        cameras = torch.as_tensor(cameras, dtype=torch.long)
        if cameras.shape != (images.shape[0],):
            raise ShapeError(
                f"Expected {images.shape[0]} camera ids, got shape {tuple(cameras.shape)}"
            )
        if cameras.numel() and not bool(
            ((cameras >= 0) & (cameras < self.cfg.num_cameras)).all()
        ):
            raise ShapeError(
                f"Camera ids must lie in [0, {self.cfg.num_cameras}), got {cameras.tolist()}"
            )

        x = self.patch_embed(images)
        cls = self.cls_token.expand(x.shape[0], -1, -1)
        x = torch.cat([cls, x], dim=1) + self.pos_embed
        x = x + self.cfg.sie_coefficient * self.sie_embed[cameras].unsqueeze(1)
        for block in self.blocks:
            x = block(x)
        return x

    def head(self, x: torch.Tensor) -> torch.Tensor:
        """Final block plus layer norm; returns the class-token output."""
        return self.norm(self.last_block(x))[:, 0]

    def global_branch(self, tokens: torch.Tensor) -> torch.Tensor:
        return self.head(tokens)

    def jigsaw_branch(self, tokens: torch.Tensor) -> torch.Tensor:
        """B x K x D local features, one per jigsaw group, through the shared final block."""
        cls = tokens[:, :1]
        patches = tokens[:, 1:]
        locals_ = []
        for group in self.groups:
            index = torch.tensor(group, dtype=torch.long, device=tokens.device)
            locals_.append(self.head(torch.cat([cls, patches[:, index]], dim=1)))
        return torch.stack(locals_, dim=1)

    def forward(self, images: torch.Tensor, cameras: torch.Tensor) -> FeatureBundle:
        tokens = self.forward_backbone(images, cameras)
        return FeatureBundle(
            global_feature=self.global_branch(tokens),
            local_features=self.jigsaw_branch(tokens),
            tokens=tokens,
        )


def init_weights(module: nn.Module, linear_std: float = INIT_STD) -> None:
    """Truncated normal for weights and embeddings, zero biases, unit norm scales.

    Linear layers use ``linear_std``; the patch projection and the
    class/position/camera embeddings use std 0.02.
    """
    for sub in module.modules():
        if isinstance(sub, (nn.Linear, nn.Conv2d)):
            std = linear_std if isinstance(sub, nn.Linear) else INIT_STD
            nn.init.trunc_normal_(sub.weight, std=std)
            if sub.bias is not None:
                nn.init.zeros_(sub.bias)
        elif isinstance(sub, (nn.LayerNorm, nn.BatchNorm1d)):
            if sub.weight is not None:
                nn.init.ones_(sub.weight)
            if sub.bias is not None:
                nn.init.zeros_(sub.bias)
        elif isinstance(sub, Encoder):
            for param in (sub.cls_token, sub.pos_embed, sub.sie_embed):
                nn.init.trunc_normal_(param, std=INIT_STD)


def build_encoder(cfg: EncoderConfig, seed: int) -> Encoder:
    """Construct and initialize an encoder; identical (cfg, seed) give identical weights."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        encoder = Encoder(cfg)
        init_weights(encoder, cfg.init_std)
    logger.debug(
        f"Built encoder: {cfg.num_patches} patches, D={cfg.embed_dim}, depth={cfg.depth}, "
        f"frozen projection={cfg.freeze_patch_projection}"
    )
    return encoder
