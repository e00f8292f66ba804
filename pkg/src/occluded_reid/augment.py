"""Occlusion masks and the two augmentation pipelines.

All functions take an explicit ``numpy.random.Generator`` and never touch
global random state, so (inputs, generator seed) fully determine the output.
Images are H x W x 3 float arrays in [0, 1]; every public function returns a
new float32 array clamped to [0, 1].
"""

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .config import MaskSpec, NormalAugConfig, StrongAugConfig
from .errors import AugmentationError, ShapeError
from .models import BinaryMask, ImageBuffer, Rect
from .validator import OCCLUDERS, validate_mask_spec

logger = logging.getLogger(__name__)

FILL_VALUE = 0.0
BASELINE_KINDS = ("random_erasing", "cutout", "hide_and_seek")
_GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])


class JitterStrengths(NamedTuple):
    brightness: float = 0.0
    contrast: float = 0.0
    saturation: float = 0.0
    hue: float = 0.0


@dataclass
class AugmentedView:
    """An augmented image and the occlusion mask applied to it, if any."""

    image: ImageBuffer
    mask: Optional[BinaryMask] = None


def _finish(img: np.ndarray) -> ImageBuffer:
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def _check_image(img: ImageBuffer) -> None:
    if not isinstance(img, np.ndarray) or img.ndim != 3 or img.shape[2] != 3:
        raise ShapeError(f"Expected an H x W x 3 image, got shape {getattr(img, 'shape', None)}")


def empty_mask(height: int, width: int) -> BinaryMask:
    return BinaryMask(bits=np.zeros((height, width), dtype=bool))


def random_rectangle_mask(
    height: int, width: int, spec: MaskSpec, rng: np.random.Generator
) -> BinaryMask:
    """Union random rectangles until they cover ``spec.ratio`` of the image.

    Each placement draws a rectangle of uniform integer size in
    [1, m_h] x [1, m_w] at a uniform in-bounds position. A rectangle whose
    union would overshoot the target is shrunk by sqrt(remaining / area)
    (floored, at least 1x1, capped so its own area fits the remainder) and
    placed at the same corner. The loop stops once the covered area reaches
    target * (1 - area_tolerance) or after ``max_attempts`` placements; in the
    latter case ``shortfall`` is set.

    Args:
        height: Image height h
        width: Image width w
        spec: Ratio, maximum rectangle size, attempt budget and tolerance
        rng: Random generator

    Returns:
        BinaryMask with the placed rectangles

    Raises:
        AugmentationError: If ``spec`` is invalid for an h x w image
    """
    errors = validate_mask_spec(spec, height, width)
    if errors:
        raise AugmentationError(f"Invalid mask spec: {'; '.join(errors)}")

    bits = np.zeros((height, width), dtype=bool)
    target = spec.ratio * height * width
    accept = target * (1.0 - spec.area_tolerance)
    rects: list[Rect] = []
    current = 0
    attempts = 0

    while current < accept and attempts < spec.max_attempts:
        attempts += 1
        rect_h = int(rng.integers(1, spec.max_height, endpoint=True))
        rect_w = int(rng.integers(1, spec.max_width, endpoint=True))
        top = int(rng.integers(0, height - rect_h, endpoint=True))
        left = int(rng.integers(0, width - rect_w, endpoint=True))

        covered = int(np.count_nonzero(bits[top : top + rect_h, left : left + rect_w]))
        if current + rect_h * rect_w - covered > target:
            remain = target - current
            factor = math.sqrt(remain / (rect_h * rect_w))
            rect_h = max(1, math.floor(rect_h * factor))
            rect_w = max(1, math.floor(rect_w * factor))
            rect_h = max(1, min(rect_h, math.floor(remain / rect_w)))
            rect_w = max(1, min(rect_w, math.floor(remain / rect_h)))

        bits[top : top + rect_h, left : left + rect_w] = True
        rects.append(Rect(top, left, rect_h, rect_w))
        current = int(np.count_nonzero(bits))

    shortfall = current < accept
    if shortfall:
        logger.debug(
            f"Mask stopped after {attempts} placements at {current}/{target:.1f} pixels"
        )
    return BinaryMask(bits=bits, rects=rects, target_area=target, shortfall=shortfall)


def apply_mask(img: ImageBuffer, mask: BinaryMask) -> ImageBuffer:
    """Zero the masked pixels in every channel; other pixels are copied unchanged.

    Raises:
        ShapeError: If mask and image sizes differ
    """
    _check_image(img)
    if mask.bits.shape != img.shape[:2]:
        raise ShapeError(f"Mask {mask.bits.shape} does not match image {img.shape[:2]}")
    out = np.array(img, dtype=np.float32, copy=True)
    out[mask.bits] = FILL_VALUE
    return out


def horizontal_flip(img: ImageBuffer) -> ImageBuffer:
    _check_image(img)
    return np.ascontiguousarray(img[:, ::-1], dtype=np.float32)


def pad_and_crop(img: ImageBuffer, pad: int, rng: np.random.Generator) -> ImageBuffer:
    """Zero-pad by ``pad`` pixels on each side, then crop a random window of the original size."""
    _check_image(img)
    h, w = img.shape[:2]
    padded = np.pad(img, ((pad, pad), (pad, pad), (0, 0)), mode="constant", constant_values=0.0)
    top = int(rng.integers(0, 2 * pad, endpoint=True))
    left = int(rng.integers(0, 2 * pad, endpoint=True))
    return _finish(padded[top : top + h, left : left + w])


def erasing_mask(
    height: int,
    width: int,
    rng: np.random.Generator,
    area_min: float = 0.02,
    area_max: float = 0.4,
    aspect_min: float = 0.3,
) -> BinaryMask:
    """One rectangle with area fraction in [area_min, area_max] and aspect in [a, 1/a]."""
    area = height * width
    target = rng.uniform(area_min, area_max) * area
    aspect = rng.uniform(aspect_min, 1.0 / aspect_min)
    rect_h = min(height, max(1, int(round(math.sqrt(target * aspect)))))
    rect_w = min(width, max(1, int(round(math.sqrt(target / aspect)))))
    top = int(rng.integers(0, height - rect_h, endpoint=True))
    left = int(rng.integers(0, width - rect_w, endpoint=True))
    bits = np.zeros((height, width), dtype=bool)
    bits[top : top + rect_h, left : left + rect_w] = True
    return BinaryMask(bits=bits, rects=[Rect(top, left, rect_h, rect_w)], target_area=target)


def cutout_mask(height: int, width: int, size: int, rng: np.random.Generator) -> BinaryMask:
    """A single size x size square (clipped to the image) placed fully inside the bounds."""
    side_h, side_w = min(size, height), min(size, width)
    if side_h <= 0 or side_w <= 0:
        return empty_mask(height, width)
    top = int(rng.integers(0, height - side_h, endpoint=True))
    left = int(rng.integers(0, width - side_w, endpoint=True))
    bits = np.zeros((height, width), dtype=bool)
    bits[top : top + side_h, left : left + side_w] = True
    return BinaryMask(
        bits=bits, rects=[Rect(top, left, side_h, side_w)], target_area=side_h * side_w
    )


def hide_and_seek_mask(
    height: int, width: int, grid: int, hide_prob: float, rng: np.random.Generator
) -> BinaryMask:
    """Split the image into grid x grid cells and hide each with probability ``hide_prob``."""
    row_edges = np.linspace(0, height, grid + 1).round().astype(int)
    col_edges = np.linspace(0, width, grid + 1).round().astype(int)
    hidden = rng.random((grid, grid)) < hide_prob
    bits = np.zeros((height, width), dtype=bool)
    rects = []
    for r in range(grid):
        for c in range(grid):
            if not hidden[r, c]:
                continue
            top, bottom = row_edges[r], row_edges[r + 1]
            left, right = col_edges[c], col_edges[c + 1]
            if bottom > top and right > left:
                bits[top:bottom, left:right] = True
                rects.append(Rect(int(top), int(left), int(bottom - top), int(right - left)))
    return BinaryMask(bits=bits, rects=rects, target_area=hide_prob * height * width)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian with radius ceil(3 sigma)."""
    radius = max(1, math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(x**2) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def gaussian_blur(img: ImageBuffer, sigma: float) -> ImageBuffer:
    """Separable Gaussian blur per channel with clamp-to-edge borders.

    Raises:
        AugmentationError: If ``sigma`` is not positive
    """
    _check_image(img)
    if not sigma > 0:
        raise AugmentationError(f"Blur sigma must be positive, got {sigma}")

    kernel = gaussian_kernel(sigma)
    radius = len(kernel) // 2
    out = np.asarray(img, dtype=np.float64)
    for axis in (0, 1):
        pad = [(0, 0)] * 3
        pad[axis] = (radius, radius)
        padded = np.pad(out, pad, mode="edge")
        out = sliding_window_view(padded, len(kernel), axis=axis) @ kernel
    return _finish(out)


def adjust_brightness(img: ImageBuffer, factor: float) -> ImageBuffer:
    return _finish(np.asarray(img, dtype=np.float64) * factor)


def adjust_contrast(img: ImageBuffer, factor: float) -> ImageBuffer:
    img = np.asarray(img, dtype=np.float64)
    mean = float((img @ _GRAY_WEIGHTS).mean())
    return _finish(img * factor + mean * (1.0 - factor))


def adjust_saturation(img: ImageBuffer, factor: float) -> ImageBuffer:
    img = np.asarray(img, dtype=np.float64)
    gray = (img @ _GRAY_WEIGHTS)[..., None]
    return _finish(img * factor + gray * (1.0 - factor))


def _rgb_to_hsv(img: np.ndarray) -> np.ndarray:
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    maxc = img.max(axis=-1)
    minc = img.min(axis=-1)
    delta = maxc - minc
    safe = np.where(delta > 0, delta, 1.0)
    hue = np.where(
        maxc == r,
        ((g - b) / safe) % 6.0,
        np.where(maxc == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0),
    )
    hue = np.where(delta > 0, hue / 6.0, 0.0)
    sat = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)
    return np.stack([hue, sat, maxc], axis=-1)


def _hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p, q, t = v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f))
    i = i.astype(int) % 6
    choices_r = [v, q, p, p, t, v]
    choices_g = [t, v, v, q, p, p]
    choices_b = [p, p, t, v, v, q]
    conds = [i == k for k in range(6)]
    return np.stack(
        [np.select(conds, choices_r), np.select(conds, choices_g), np.select(conds, choices_b)],
        axis=-1,
    )


def adjust_hue(img: ImageBuffer, shift: float) -> ImageBuffer:
    """Rotate hue by ``shift`` turns (0.5 = 180 degrees)."""
    if shift == 0.0:
        return _finish(img)
    hsv = _rgb_to_hsv(np.asarray(img, dtype=np.float64))
    hsv[..., 0] = (hsv[..., 0] + shift) % 1.0
    return _finish(_hsv_to_rgb(hsv))


def color_jitter(
    img: ImageBuffer, strengths: JitterStrengths, rng: np.random.Generator
) -> ImageBuffer:
    """Random brightness, contrast and saturation, then hue.

    Factors are drawn from [1-s, 1+s]; the hue shift from [-s, s].
    """
    _check_image(img)
    b = rng.uniform(max(0.0, 1.0 - strengths.brightness), 1.0 + strengths.brightness)
    c = rng.uniform(max(0.0, 1.0 - strengths.contrast), 1.0 + strengths.contrast)
    s = rng.uniform(max(0.0, 1.0 - strengths.saturation), 1.0 + strengths.saturation)
    hue = rng.uniform(-strengths.hue, strengths.hue)

    out = adjust_brightness(img, b)
    out = adjust_contrast(out, c)
    out = adjust_saturation(out, s)
    return adjust_hue(out, hue)


def solarize(img: ImageBuffer, threshold: float) -> ImageBuffer:
    """Invert every channel value at or above ``threshold``."""
    _check_image(img)
    img = np.asarray(img, dtype=np.float32)
    return _finish(np.where(img >= threshold, 1.0 - img, img))


def normal_pipeline(
    img: ImageBuffer,
    rng: np.random.Generator,
    cfg: Optional[NormalAugConfig] = None,
) -> ImageBuffer:
    """Supervised-branch augmentation: flip, pad-and-crop, random erasing."""
    cfg = cfg or NormalAugConfig()
    _check_image(img)
    out = np.asarray(img, dtype=np.float32)

    if rng.random() < cfg.flip_prob:
        out = horizontal_flip(out)
    if rng.random() < cfg.crop_prob:
        out = pad_and_crop(out, cfg.pad, rng)
    if rng.random() < cfg.erase_prob:
        h, w = out.shape[:2]
        mask = erasing_mask(h, w, rng, cfg.erase_area_min, cfg.erase_area_max, cfg.erase_aspect_min)
        out = apply_mask(out, mask)
    return _finish(out)


def occluder_mask(
    kind: str, height: int, width: int, cfg: StrongAugConfig, rng: np.random.Generator
) -> BinaryMask:
    """Draw the occlusion mask of the named kind.

    Raises:
        AugmentationError: On an unknown kind
    """
    if kind == "random_mask":
        return random_rectangle_mask(height, width, cfg.mask.clamped(height, width), rng)
    if kind == "random_erasing":
        normal = NormalAugConfig()
        return erasing_mask(
            height,
            width,
            rng,
            normal.erase_area_min,
            normal.erase_area_max,
            normal.erase_aspect_min,
        )
    if kind == "cutout":
        return cutout_mask(height, width, cfg.cutout_size, rng)
    if kind == "hide_and_seek":
        return hide_and_seek_mask(height, width, cfg.hide_grid, cfg.hide_prob, rng)
    if kind == "none":
        return empty_mask(height, width)
    raise AugmentationError(f"Unknown occluder '{kind}'. Must be one of {list(OCCLUDERS)}")


def strong_view(
    img: ImageBuffer, cfg: StrongAugConfig, rng: np.random.Generator
) -> AugmentedView:
    """Strong-branch augmentation returning the applied mask alongside the image."""
    _check_image(img)
    out = np.asarray(img, dtype=np.float32)

    if rng.random() < cfg.jitter_prob:
        strengths = JitterStrengths(cfg.brightness, cfg.contrast, cfg.saturation, cfg.hue)
        out = color_jitter(out, strengths, rng)
    if rng.random() < cfg.blur_prob:
        out = gaussian_blur(out, rng.uniform(cfg.blur_sigma_min, cfg.blur_sigma_max))
    if rng.random() < cfg.solarize_prob:
        out = solarize(out, cfg.solarize_threshold)

    mask = occluder_mask(cfg.occluder, out.shape[0], out.shape[1], cfg, rng)
    return AugmentedView(image=apply_mask(out, mask), mask=mask)


def strong_pipeline(
    img: ImageBuffer, cfg: StrongAugConfig, rng: np.random.Generator
) -> ImageBuffer:
    """Color jitter, Gaussian blur, solarize, then the configured occluder (always)."""
    return strong_view(img, cfg, rng).image


def baseline_occluders(
    img: ImageBuffer,
    kind: str,
    rng: np.random.Generator,
    cfg: Optional[StrongAugConfig] = None,
) -> ImageBuffer:
    """Apply one of the comparison occluders: random_erasing, cutout or hide_and_seek.

    Raises:
        AugmentationError: On an unknown kind
    """
    if kind not in BASELINE_KINDS:
        raise AugmentationError(
            f"Unknown baseline occluder '{kind}'. Must be one of {list(BASELINE_KINDS)}"
        )
    _check_image(img)
    mask = occluder_mask(kind, img.shape[0], img.shape[1], cfg or StrongAugConfig(), rng)
    return apply_mask(img, mask)
