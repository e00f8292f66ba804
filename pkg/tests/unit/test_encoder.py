"""Tests for the transformer encoder, the jigsaw grouping and initialization."""

import dataclasses
import math

import numpy as np
import pytest
import torch

from occluded_reid import EncoderConfig, ShapeError, build_encoder
from occluded_reid.encoder import images_to_tensor, jigsaw_groups

TINY = EncoderConfig(
    image_height=16,
    image_width=16,
    patch_size=8,
    stride=8,
    embed_dim=16,
    depth=2,
    num_heads=2,
    jigsaw_groups=2,
    jigsaw_shift=1,
    num_cameras=3,
)


def _layer_norm(x, norm):
    mean = x.mean(-1, keepdim=True)
    var = ((x - mean) ** 2).mean(-1, keepdim=True)
    return (x - mean) / torch.sqrt(var + norm.eps) * norm.weight + norm.bias


def _reference_block(x, block, num_heads):
    """Single-sample block forward written out token by token."""
    dim = x.shape[-1]
    hd = dim // num_heads
    h = _layer_norm(x, block.norm1)
    qkv = h @ block.attn.qkv.weight.T + block.attn.qkv.bias
    q, k, v = qkv[:, :dim], qkv[:, dim : 2 * dim], qkv[:, 2 * dim :]
    heads = []
    for i in range(num_heads):
        cols = slice(i * hd, (i + 1) * hd)
        scores = q[:, cols] @ k[:, cols].T / math.sqrt(hd)
        weights = torch.exp(scores - scores.max(-1, keepdim=True).values)
        weights = weights / weights.sum(-1, keepdim=True)
        heads.append(weights @ v[:, cols])
    x = x + torch.cat(heads, dim=-1) @ block.attn.proj.weight.T + block.attn.proj.bias
    h = _layer_norm(x, block.norm2) @ block.fc1.weight.T + block.fc1.bias
    h = 0.5 * h * (1.0 + torch.erf(h / math.sqrt(2.0)))
    return x + h @ block.fc2.weight.T + block.fc2.bias


def _reference_tokens(encoder, image, camera):
    cfg = encoder.cfg
    weight = encoder.patch_embed.proj.weight.reshape(cfg.embed_dim, -1)
    bias = encoder.patch_embed.proj.bias
    rows, cols = cfg.grid
    patches = []
    for r in range(rows):
        for c in range(cols):
            top, left = r * cfg.stride, c * cfg.stride
            window = image[:, top : top + cfg.patch_size, left : left + cfg.patch_size]
            patches.append(weight @ window.reshape(-1) + bias)
    x = torch.cat([encoder.cls_token[0], torch.stack(patches)], dim=0) + encoder.pos_embed[0]
    x = x + cfg.sie_coefficient * encoder.sie_embed[camera]
    for block in encoder.blocks:
        x = _reference_block(x, block, cfg.num_heads)
    return x


class TestPatchEmbed:
    """Patch extraction and projection."""

    @pytest.mark.parametrize("stride, expected", [(16, 128), (12, 210)])
    def test_patch_counts(self, stride: int, expected: int):
        cfg = EncoderConfig(stride=stride, embed_dim=8, depth=2, num_heads=2)
        encoder = build_encoder(cfg, seed=0)
        assert encoder.num_patches == expected
        tokens = encoder.forward_backbone(torch.zeros(1, 3, 256, 128), torch.tensor([0]))
        assert tokens.shape == (1, expected + 1, 8)

    def test_zero_image_gives_bias(self):
        encoder = build_encoder(TINY, seed=0)
        with torch.no_grad():
            encoder.patch_embed.proj.bias.normal_()
        embedded = encoder.patch_embed_images(torch.zeros(2, 3, 16, 16))
        expected = encoder.patch_embed.proj.bias.expand(2, 4, 16)
        assert torch.allclose(embedded, expected)

    def test_size_mismatch(self):
        encoder = build_encoder(TINY, seed=0)
        with pytest.raises(ShapeError):
            encoder.patch_embed_images(torch.zeros(1, 3, 16, 24))


class TestBackbone:
    """Sequence entering the final block."""

    def test_matches_reference_forward(self):
        encoder = build_encoder(TINY, seed=1).double()
        images = torch.rand(2, 3, 16, 16, dtype=torch.float64)
        cameras = torch.tensor([0, 2])
        tokens = encoder.forward_backbone(images, cameras)
        for i in range(2):
            expected = _reference_tokens(encoder, images[i], int(cameras[i]))
            assert torch.allclose(tokens[i], expected, atol=1e-6)

    def test_global_feature_matches_reference(self):
        encoder = build_encoder(TINY, seed=1).double()
        images = torch.rand(1, 3, 16, 16, dtype=torch.float64)
        bundle = encoder(images, torch.tensor([1]))
        tokens = _reference_tokens(encoder, images[0], 1)
        final = _reference_block(tokens, encoder.last_block, TINY.num_heads)
        expected = _layer_norm(final, encoder.norm)[0]
        assert torch.allclose(bundle.global_feature[0], expected, atol=1e-6)

    def test_zero_sie_coefficient_ignores_camera(self):
        cfg = dataclasses.replace(TINY, sie_coefficient=0.0)
        encoder = build_encoder(cfg, seed=0)
        images = torch.rand(1, 3, 16, 16).expand(2, -1, -1, -1)
        tokens = encoder.forward_backbone(images, torch.tensor([0, 2]))
        assert torch.allclose(tokens[0], tokens[1], atol=1e-6)

    def test_camera_changes_output(self):
        encoder = build_encoder(TINY, seed=0)
        images = torch.rand(1, 3, 16, 16).expand(2, -1, -1, -1)
        tokens = encoder.forward_backbone(images, torch.tensor([0, 2]))
        assert not torch.allclose(tokens[0], tokens[1])

    def test_identical_inputs_identical_outputs(self):
        encoder = build_encoder(TINY, seed=0)
        images = torch.rand(1, 3, 16, 16).expand(2, -1, -1, -1)
        bundle = encoder(images, torch.tensor([1, 1]))
        assert torch.allclose(bundle.global_feature[0], bundle.global_feature[1], atol=1e-6)

    @pytest.mark.parametrize("cameras", [[0, 3], [-1, 0], [0]])
    def test_bad_camera_ids(self, cameras):
        encoder = build_encoder(TINY, seed=0)
        with pytest.raises(ShapeError):
            encoder.forward_backbone(torch.zeros(2, 3, 16, 16), torch.tensor(cameras))

    def test_outputs_finite_and_sized(self, toy_config):
        encoder = build_encoder(toy_config.encoder, seed=0)
        bundle = encoder(torch.rand(3, 3, 32, 32), torch.tensor([0, 1, 3]))
        assert bundle.tokens.shape == (3, 17, 32)
        assert bundle.global_feature.shape == (3, 32)
        assert bundle.local_features.shape == (3, 2, 32)
        assert bundle.num_groups == 2
        assert torch.isfinite(bundle.tokens).all()
        assert torch.isfinite(bundle.local_features).all()


class TestJigsaw:
    """Shift-and-interleave grouping through the shared final block."""

    def test_group_enumeration(self):
        assert jigsaw_groups(8, 4, 1) == [[1, 5], [2, 6], [3, 7], [4, 0]]

    def test_group_sizes_balanced(self):
        sizes = [len(g) for g in jigsaw_groups(210, 4, 5)]
        assert max(sizes) - min(sizes) <= 1
        assert sum(sizes) == 210

    def test_too_many_groups(self):
        with pytest.raises(ShapeError):
            jigsaw_groups(4, 5, 0)

    def test_single_group_equals_global(self):
        cfg = dataclasses.replace(TINY, jigsaw_groups=1, jigsaw_shift=0)
        encoder = build_encoder(cfg, seed=0)
        bundle = encoder(torch.rand(2, 3, 16, 16), torch.tensor([0, 1]))
        assert torch.allclose(bundle.local_features[:, 0], bundle.global_feature, atol=1e-6)

    def test_permutation_within_group(self):
        encoder = build_encoder(TINY, seed=0)
        tokens = encoder.forward_backbone(torch.rand(1, 3, 16, 16), torch.tensor([0]))
        group = encoder.groups[0]
        shuffled = tokens.clone()
        shuffled[:, [1 + i for i in group]] = tokens[:, [1 + i for i in reversed(group)]]
        before = encoder.jigsaw_branch(tokens)
        after = encoder.jigsaw_branch(shuffled)
        assert torch.allclose(before[:, 0], after[:, 0], atol=1e-6)

    def test_final_block_is_shared(self):
        encoder = build_encoder(TINY, seed=0)
        tokens = encoder.forward_backbone(torch.rand(1, 3, 16, 16), torch.tensor([0]))
        global_before = encoder.global_branch(tokens)
        local_before = encoder.jigsaw_branch(tokens)
        with torch.no_grad():
            encoder.last_block.fc2.bias.add_(0.5)
        assert not torch.allclose(encoder.global_branch(tokens), global_before)
        assert not torch.allclose(encoder.jigsaw_branch(tokens), local_before)


class TestInit:
    """Deterministic initialization."""

    def test_same_seed_same_weights(self):
        first = build_encoder(TINY, seed=4).state_dict()
        second = build_encoder(TINY, seed=4).state_dict()
        assert all(torch.equal(first[name], second[name]) for name in first)

    def test_seed_changes_weights(self):
        first = build_encoder(TINY, seed=4)
        second = build_encoder(TINY, seed=5)
        assert not torch.equal(first.pos_embed, second.pos_embed)

    def test_global_rng_untouched(self):
        torch.manual_seed(123)
        expected = torch.rand(3)
        torch.manual_seed(123)
        build_encoder(TINY, seed=0)
        assert torch.equal(torch.rand(3), expected)

    def test_frozen_flags(self):
        encoder = build_encoder(TINY, seed=0)
        frozen = {name for name, p in encoder.named_parameters() if not p.requires_grad}
        assert frozen == {"patch_embed.proj.weight", "patch_embed.proj.bias"}

        encoder.set_patch_projection_frozen(False)
        assert all(p.requires_grad for p in encoder.parameters())

    def test_linear_std_leaves_patch_projection(self):
        encoder = build_encoder(dataclasses.replace(TINY, init_std=0.1), seed=0)
        assert 0.08 < float(encoder.blocks[0].fc1.weight.std()) < 0.12
        assert 0.015 < float(encoder.patch_embed.proj.weight.std()) < 0.025
        assert float(encoder.pos_embed.std()) < 0.03

    def test_values(self):
        encoder = build_encoder(TINY, seed=0)
        assert all(torch.isfinite(p).all() for p in encoder.parameters())
        assert torch.equal(encoder.norm.weight, torch.ones(16))
        assert torch.equal(encoder.blocks[0].fc1.bias, torch.zeros(64))


class TestImagesToTensor:
    def test_layout(self, image):
        batch = images_to_tensor([image, image])
        assert batch.shape == (2, 3, 24, 16)
        assert np.array_equal(batch[1, 2].numpy(), image[..., 2])

    def test_mixed_shapes(self, image):
        with pytest.raises(ShapeError):
            images_to_tensor([image, image[:10]])

    def test_empty(self):
        with pytest.raises(ShapeError):
            images_to_tensor([])
