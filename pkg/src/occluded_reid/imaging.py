"""Image buffers, dataset ingestion, synthetic people and identity-balanced sampling."""

import logging
import math
import re
from collections import defaultdict
from pathlib import Path
from typing import Optional, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DatasetError, ShapeError
from .models import IdentityBatch, ImageBuffer, PersonSample, Split

logger = logging.getLogger(__name__)

DEFAULT_SIZE = (256, 128)
IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp"}

# Market-1501 naming: <pid>_c<cam>s<seq>_<frame>.<ext>; pid -1 marks junk.
NAME_PATTERN = re.compile(r"^(-?\d+)_c(\d+)")
JUNK_PID = -1

# Accepted directory names per split, Market-1501 names first.
SPLIT_DIRS = {
    Split.TRAIN: ("bounding_box_train", "train"),
    Split.QUERY: ("query",),
    Split.GALLERY: ("bounding_box_test", "gallery"),
}


def validate_image(img: ImageBuffer) -> None:
    """Check that ``img`` is a finite H x W x 3 buffer in [0, 1].

    Raises:
        ShapeError: If the shape or value range is wrong
    """
    if not isinstance(img, np.ndarray) or img.ndim != 3 or img.shape[2] != 3:
        shape = getattr(img, "shape", None)
        raise ShapeError(f"Expected an H x W x 3 image, got shape {shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ShapeError(f"Image must be at least 1x1, got {img.shape[:2]}")
    if not np.all(np.isfinite(img)) or img.min(initial=0.0) < 0.0 or img.max(initial=0.0) > 1.0:
        raise ShapeError("Image values must be finite and in [0, 1]")


def from_uint8(pixels: np.ndarray) -> ImageBuffer:
    return pixels.astype(np.float32) / np.float32(255.0)


def to_uint8(img: ImageBuffer) -> np.ndarray:
    return np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def load_image(path: Path, size: Optional[tuple[int, int]] = DEFAULT_SIZE) -> ImageBuffer:
    """Decode an image file to an H x W x 3 float buffer.

    Args:
        path: Image file
        size: Target (height, width) for bilinear resizing, or None to keep
            the native size

    Returns:
        float32 image in [0, 1]
    """
    with Image.open(path) as img:
        rgb = img.convert("RGB")
        if size is not None and (rgb.height, rgb.width) != tuple(size):
            rgb = rgb.resize((size[1], size[0]), Image.Resampling.BILINEAR)
        return from_uint8(np.asarray(rgb, dtype=np.uint8))


def save_image(img: ImageBuffer, path: Path) -> None:
    """Write ``img`` as an 8-bit RGB file (format chosen by the suffix).

    Raises:
        ShapeError: If ``img`` is not a valid image buffer
    """
    validate_image(img)
    Image.fromarray(to_uint8(img)).save(path)


def parse_person_name(name: str) -> Optional[tuple[int, int]]:
    """Return (pid, camera) from a Market-1501 style file name, or None."""
    match = NAME_PATTERN.match(name)
    if match is None:
        return None
    return int(match.group(1)), int(match.group(2))


def find_split_dir(root: Path, split: Union[Split, str]) -> Path:
    """Locate the directory holding ``split`` under ``root``.

    Raises:
        DatasetError: If none of the accepted directory names exists
    """
    split = Split(split)
    root = Path(root)
    for name in SPLIT_DIRS[split]:
        candidate = root / name
        if candidate.is_dir():
            return candidate
    if split is Split.TRAIN and root.is_dir() and any(_image_files(root)):
        return root
    raise DatasetError(
        f"No '{split.value}' directory (tried {', '.join(SPLIT_DIRS[split])})", root=root
    )


def _image_files(directory: Path) -> list[Path]:
    return sorted(
        p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
    )


def load_dataset(
    root: Path,
    split: Union[Split, str],
    size: tuple[int, int] = DEFAULT_SIZE,
) -> list[PersonSample]:
    """Load one split of a Market-1501 style directory.

    Identities are re-mapped to dense labels 0..C-1 in ascending pid order;
    junk files (pid -1) are flagged and keep identity -1.

    Args:
        root: Dataset root (or the split directory itself for ``train``)
        split: ``train``, ``query`` or ``gallery``
        size: Target (height, width)

    Returns:
        List of PersonSample in file-name order

    Raises:
        DatasetError: If the directory is missing or yields no usable samples
    """
    directory = find_split_dir(Path(root), split)

    parsed: list[tuple[Path, int, int, ImageBuffer]] = []
    skipped = 0
    for path in _image_files(directory):
        ids = parse_person_name(path.name)
        if ids is None:
            logger.warning(f"Skipping {path.name}: name does not match <id>_c<cam>")
            skipped += 1
            continue
        try:
            image = load_image(path, size)
        except (OSError, UnidentifiedImageError, ValueError) as e:
            logger.warning(f"Skipping unreadable image {path}: {e}")
            skipped += 1
            continue
        parsed.append((path, ids[0], ids[1], image))

    if not parsed:
        raise DatasetError(f"No usable images in split '{Split(split).value}'", root=directory)

    pids = sorted({pid for _, pid, _, _ in parsed if pid != JUNK_PID})
    dense = {pid: label for label, pid in enumerate(pids)}

    samples = [
        PersonSample(
            image=image,
            identity=dense.get(pid, -1),
            camera=camera,
            pid=pid,
            is_junk=pid == JUNK_PID,
            path=path,
        )
        for path, pid, camera, image in parsed
    ]

    if skipped:
        logger.warning(f"Skipped {skipped} file(s) in {directory}")
    logger.info(
        f"Loaded {len(samples)} samples, {len(pids)} identities from {directory}"
    )
    return samples


def _hsv_to_rgb(h: float, s: float, v: float) -> np.ndarray:
    i = int(h * 6.0) % 6
    f = h * 6.0 - math.floor(h * 6.0)
    p, q, t = v * (1 - s), v * (1 - s * f), v * (1 - s * (1 - f))
    return np.array(
        [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i], dtype=np.float64
    )


_BACKGROUND = np.array([0.35, 0.38, 0.42])
_SKIN = np.array([0.86, 0.70, 0.56])


def _span(lo: float, hi: float, n: int) -> slice:
    return slice(int(round(lo * n)), max(int(round(lo * n)) + 1, int(round(hi * n))))


def render_identity(identity: int, size: tuple[int, int] = DEFAULT_SIZE) -> np.ndarray:
    """Canonical (untransformed) rendering of a synthetic identity.

    A body-shaped silhouette: head, striped torso with a 3x3 glyph, arms and
    legs. Torso and leg hues are spaced by the golden ratio so every pair of
    identities differs over the whole torso.
    """
    h, w = size
    canvas = np.empty((h, w, 3), dtype=np.float64)
    canvas[:] = _BACKGROUND

    torso_hue = (identity * 0.6180339887) % 1.0
    legs_hue = (identity * 0.3819660113 + 0.5) % 1.0
    torso = _hsv_to_rgb(torso_hue, 0.75, 0.9)
    stripe = _hsv_to_rgb(torso_hue, 0.9, 0.45)
    legs = _hsv_to_rgb(legs_hue, 0.6, 0.6)

    rows = np.arange(h)[:, None]
    cols = np.arange(w)[None, :]
    head = ((rows - 0.12 * h) / (0.08 * h)) ** 2 + ((cols - 0.5 * w) / (0.14 * w)) ** 2 <= 1.0
    canvas[head] = _SKIN

    ty, tx = _span(0.21, 0.55, h), _span(0.25, 0.75, w)
    canvas[ty, tx] = torso
    n_stripes = 2 + identity % 4
    vertical = (identity // 4) % 2 == 1
    extent = (tx.stop - tx.start) if vertical else (ty.stop - ty.start)
    for k in range(n_stripes):
        lo = tx.start if vertical else ty.start
        a = lo + (2 * k + 1) * extent // (2 * n_stripes + 1)
        b = max(a + 1, lo + (2 * k + 2) * extent // (2 * n_stripes + 1))
        if vertical:
            canvas[ty, a:b] = stripe
        else:
            canvas[a:b, tx] = stripe

    glyph = (identity * 2654435761) % 512
    gy, gx = _span(0.30, 0.45, h), _span(0.40, 0.60, w)
    cell_h = max(1, (gy.stop - gy.start) // 3)
    cell_w = max(1, (gx.stop - gx.start) // 3)
    for bit in range(9):
        r, c = divmod(bit, 3)
        color = 1.0 if (glyph >> bit) & 1 else 0.05
        canvas[
            gy.start + r * cell_h : gy.start + (r + 1) * cell_h,
            gx.start + c * cell_w : gx.start + (c + 1) * cell_w,
        ] = color

    arms = stripe * 0.8
    canvas[_span(0.22, 0.50, h), _span(0.15, 0.25, w)] = arms
    canvas[_span(0.22, 0.50, h), _span(0.75, 0.85, w)] = arms
    canvas[_span(0.55, 0.95, h), _span(0.28, 0.48, w)] = legs
    canvas[_span(0.55, 0.95, h), _span(0.52, 0.72, w)] = legs
    return canvas


def _camera_transform(seed: int, camera: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng([seed, 7919, camera])
    return rng.uniform(0.8, 1.2, size=3), rng.uniform(-0.05, 0.05, size=3)


def _translate(canvas: np.ndarray, dy: int, dx: int) -> np.ndarray:
    h, w = canvas.shape[:2]
    out = np.empty_like(canvas)
    out[:] = _BACKGROUND
    src_y = slice(max(0, -dy), min(h, h - dy))
    dst_y = slice(max(0, dy), min(h, h + dy))
    src_x = slice(max(0, -dx), min(w, w - dx))
    dst_x = slice(max(0, dx), min(w, w + dx))
    out[dst_y, dst_x] = canvas[src_y, src_x]
    return out


def generate_synthetic_dataset(
    n_ids: int,
    imgs_per_id: int,
    n_cams: int,
    seed: int,
    size: tuple[int, int] = DEFAULT_SIZE,
    occluder_prob: float = 0.3,
) -> list[PersonSample]:
    """Generate a deterministic synthetic person dataset.

    Each image of an identity is its canonical rendering under the camera's
    fixed color transform, shifted by up to 10% of the image size, and with
    probability ``occluder_prob`` covered by a gray rectangle. Pixel values are
    quantized to 8 bits so the dataset survives a PNG round trip unchanged.

    Args:
        n_ids: Number of identities (at least 2)
        imgs_per_id: Images per identity (at least 2)
        n_cams: Number of cameras; image i of an identity uses camera i mod n_cams
        seed: Seed; identical arguments give byte-identical pixels
        size: (height, width)
        occluder_prob: Probability of the gray occluder

    Returns:
        Samples ordered by identity, then image index

    Raises:
        DatasetError: On fewer than 2 identities or images per identity
    """
    if n_ids < 2:
        raise DatasetError(f"Retrieval needs at least 2 identities, got {n_ids}")
    if imgs_per_id < 2:
        raise DatasetError(f"Need at least 2 images per identity, got {imgs_per_id}")
    if n_cams < 1:
        raise DatasetError(f"Need at least 1 camera, got {n_cams}")

    h, w = size
    max_dy, max_dx = int(0.1 * h), int(0.1 * w)
    transforms = [_camera_transform(seed, c) for c in range(n_cams)]

    samples = []
    for identity in range(n_ids):
        canonical = render_identity(identity, size)
        for index in range(imgs_per_id):
            rng = np.random.default_rng([seed, identity, index])
            camera = index % n_cams
            gains, offset = transforms[camera]

            dy = int(rng.integers(-max_dy, max_dy, endpoint=True))
            dx = int(rng.integers(-max_dx, max_dx, endpoint=True))
            img = _translate(canonical, dy, dx) * gains + offset

            if rng.random() < occluder_prob:
                oh = int(rng.integers(max(1, h // 5), max(1, 2 * h // 5), endpoint=True))
                ow = int(rng.integers(max(1, w // 5), max(1, 2 * w // 5), endpoint=True))
                top = int(rng.integers(0, h - oh, endpoint=True))
                left = int(rng.integers(0, w - ow, endpoint=True))
                img[top : top + oh, left : left + ow] = 0.5

            samples.append(
                PersonSample(
                    image=from_uint8(to_uint8(np.clip(img, 0.0, 1.0))),
                    identity=identity,
                    camera=camera,
                    pid=identity + 1,
                )
            )

    logger.info(f"Generated {len(samples)} synthetic samples, {n_ids} identities")
    return samples


def write_dataset(
    samples: list[PersonSample],
    root: Path,
    query_per_id: int = 1,
    gallery_per_id: int = 1,
) -> dict[str, int]:
    """Write samples in the Market-1501 layout.

    Per identity, in sample order: the first ``query_per_id`` images go to
    ``query``, the next ``gallery_per_id`` to ``bounding_box_test`` and the
    rest to ``bounding_box_train``.

    Returns:
        Number of files written per split
    """
    root = Path(root)
    dirs = {split: root / SPLIT_DIRS[split][0] for split in Split}
    for directory in dirs.values():
        directory.mkdir(parents=True, exist_ok=True)

    counts = {split.value: 0 for split in Split}
    seen: dict[int, int] = defaultdict(int)
    for sample in samples:
        position = seen[sample.pid]
        seen[sample.pid] += 1
        if position < query_per_id:
            split = Split.QUERY
        elif position < query_per_id + gallery_per_id:
            split = Split.GALLERY
        else:
            split = Split.TRAIN
        name = f"{sample.pid:04d}_c{sample.camera}s1_{position:06d}.png"
        save_image(sample.image, dirs[split] / name)
        counts[split.value] += 1

    logger.info(f"Wrote dataset to {root}: {counts}")
    return counts


def held_in_split(samples: list[PersonSample]) -> tuple[list[PersonSample], list[PersonSample]]:
    """Split training samples into query (first image per identity) and gallery (the rest)."""
    query, gallery = [], []
    seen: set[int] = set()
    for sample in samples:
        if sample.is_junk:
            gallery.append(sample)
        elif sample.pid not in seen:
            seen.add(sample.pid)
            query.append(sample)
        else:
            gallery.append(sample)
    return query, gallery


class IdentitySampler:
    """PK batch sampler with epoch semantics over identities.

    Identities are visited in a fresh random permutation per epoch; every batch
    holds ``ids_per_batch`` distinct identities with ``images_per_id`` images
    each. Identities with too few images are sampled with replacement. Junk
    samples are never drawn.

    Example:
        >>> sampler = IdentitySampler(samples, 25, 4, np.random.default_rng(0))
        >>> batch = sampler.sample_batch()
        >>> len(batch)
        100
    """

    def __init__(
        self,
        dataset: list[PersonSample],
        ids_per_batch: int,
        images_per_id: int,
        rng: np.random.Generator,
    ):
        if ids_per_batch < 1 or images_per_id < 1:
            raise DatasetError("ids_per_batch and images_per_id must be positive")

        pool: dict[int, list[int]] = defaultdict(list)
        for index, sample in enumerate(dataset):
            if not sample.is_junk:
                pool[sample.identity].append(index)

        if len(pool) < ids_per_batch:
            raise DatasetError(
                f"Batch needs {ids_per_batch} identities but the dataset has {len(pool)}"
            )

        self._dataset = dataset
        self._pool = dict(pool)
        self._ids = np.array(sorted(pool), dtype=np.int64)
        self._rng = rng
        self._queue: list[int] = []
        self.ids_per_batch = ids_per_batch
        self.images_per_id = images_per_id

    @property
    def dataset(self) -> list[PersonSample]:
        return self._dataset

    @property
    def num_identities(self) -> int:
        return len(self._ids)

    @property
    def batches_per_epoch(self) -> int:
        return math.ceil(self.num_identities / self.ids_per_batch)

    def _next_identities(self) -> list[int]:
        chosen: list[int] = []
        while len(chosen) < self.ids_per_batch:
            position = next((i for i, ident in enumerate(self._queue) if ident not in chosen), None)
            if position is None:
                self._queue.extend(int(i) for i in self._rng.permutation(self._ids))
                continue
            chosen.append(self._queue.pop(position))
        return chosen

    def sample_batch(self) -> IdentityBatch:
        samples = []
        for identity in self._next_identities():
            indices = self._pool[identity]
            replace = len(indices) < self.images_per_id
            picked = self._rng.choice(len(indices), size=self.images_per_id, replace=replace)
            samples.extend(self._dataset[indices[int(i)]] for i in picked)
        return IdentityBatch(
            samples=samples,
            ids_per_batch=self.ids_per_batch,
            images_per_id=self.images_per_id,
        )


def sample_batch(
    dataset: list[PersonSample],
    ids_per_batch: int,
    images_per_id: int,
    state: Union[np.random.Generator, IdentitySampler],
) -> IdentityBatch:
    """Draw one PK batch.

    ``state`` is either an IdentitySampler over ``dataset``, whose position in
    the identity permutation advances with every call, or a bare generator,
    which draws a single batch from a fresh sampler.

    Raises:
        DatasetError: If the dataset cannot fill a batch, or the sampler was
            built for another dataset or batch shape
    """
    if isinstance(state, IdentitySampler):
        if state.dataset is not dataset or (state.ids_per_batch, state.images_per_id) != (
            ids_per_batch,
            images_per_id,
        ):
            raise DatasetError("Sampler state does not belong to this dataset and batch shape")
        return state.sample_batch()
    return IdentitySampler(dataset, ids_per_batch, images_per_id, state).sample_batch()
