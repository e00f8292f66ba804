"""Tests for image I/O, dataset loading, the synthetic generator and PK sampling."""

from collections import Counter
from pathlib import Path

import numpy as np
import pytest

from occluded_reid import (
    DatasetError,
    IdentitySampler,
    PersonSample,
    ShapeError,
    Split,
    generate_synthetic_dataset,
    held_in_split,
    load_dataset,
    sample_batch,
    write_dataset,
)
from occluded_reid.imaging import load_image, parse_person_name, render_identity, save_image


def _write(path: Path, value: float = 0.5, size=(8, 4)) -> None:
    save_image(np.full((*size, 3), value, dtype=np.float32), path)


class TestNames:
    """Market-1501 file-name parsing."""

    def test_regular_name(self):
        assert parse_person_name("0002_c1s1_000451.png") == (2, 1)

    def test_junk_name(self):
        assert parse_person_name("-1_c3s2_000000.png") == (-1, 3)

    def test_unparsable_name(self):
        assert parse_person_name("thumbs.png") is None


class TestLoadDataset:
    """Directory ingestion."""

    def test_dense_labels_and_junk(self, tmp_path: Path):
        split = tmp_path / "bounding_box_test"
        split.mkdir()
        _write(split / "0002_c1s1_000451.png")
        _write(split / "0007_c2s1_000001.png")
        _write(split / "-1_c3s2_000000.png")

        samples = load_dataset(tmp_path, Split.GALLERY, size=(16, 8))
        by_pid = {s.pid: s for s in samples}

        assert by_pid[2].identity == 0
        assert by_pid[2].camera == 1
        assert by_pid[7].identity == 1
        assert by_pid[-1].is_junk
        assert by_pid[-1].camera == 3
        assert all(s.image.shape == (16, 8, 3) for s in samples)

    def test_skips_unreadable_files(self, tmp_path: Path, caplog):
        split = tmp_path / "query"
        split.mkdir()
        _write(split / "0001_c1s1_000000.png")
        (split / "0001_c2s1_000001.png").write_bytes(b"not an image")
        _write(split / "readme.png")

        samples = load_dataset(tmp_path, "query", size=(8, 4))
        assert len(samples) == 1
        assert "Skipped 2" in caplog.text

    def test_empty_directory_is_an_error(self, tmp_path: Path):
        (tmp_path / "query").mkdir()
        with pytest.raises(DatasetError):
            load_dataset(tmp_path, "query")

    def test_missing_split_is_an_error(self, tmp_path: Path):
        with pytest.raises(DatasetError):
            load_dataset(tmp_path, "gallery")

    def test_resize_is_deterministic(self, tmp_path: Path, rng):
        path = tmp_path / "0001_c1s1_000000.png"
        save_image(rng.random((40, 20, 3)), path)
        first = load_image(path, (32, 16))
        second = load_image(path, (32, 16))
        assert first.dtype == np.float32
        assert np.array_equal(first, second)


class TestSyntheticDataset:
    """Procedural identities."""

    def test_cardinality(self):
        samples = generate_synthetic_dataset(10, 8, 4, seed=7, size=(32, 16))
        assert len(samples) == 80
        assert len({s.identity for s in samples}) == 10
        assert {s.camera for s in samples} <= {0, 1, 2, 3}
        assert all(s.image.shape == (32, 16, 3) for s in samples)

    def test_deterministic(self):
        a = generate_synthetic_dataset(3, 3, 2, seed=1, size=(32, 16))
        b = generate_synthetic_dataset(3, 3, 2, seed=1, size=(32, 16))
        assert all(np.array_equal(x.image, y.image) for x, y in zip(a, b))

    def test_seed_changes_pixels(self):
        a = generate_synthetic_dataset(3, 3, 2, seed=1, size=(32, 16))
        b = generate_synthetic_dataset(3, 3, 2, seed=2, size=(32, 16))
        assert any(not np.array_equal(x.image, y.image) for x, y in zip(a, b))

    @pytest.mark.parametrize("n_ids, per_id", [(1, 8), (4, 1)])
    def test_degenerate_sizes_rejected(self, n_ids: int, per_id: int):
        with pytest.raises(DatasetError):
            generate_synthetic_dataset(n_ids, per_id, 2, seed=0)

    def test_identities_are_distinguishable(self):
        renders = [render_identity(i) for i in range(10)]
        for i in range(10):
            for j in range(i + 1, 10):
                differs = np.any(np.abs(renders[i] - renders[j]) > 1e-6, axis=-1)
                assert differs.mean() >= 0.05, (i, j)

    def test_values_survive_png(self, tmp_path: Path):
        sample = generate_synthetic_dataset(2, 2, 1, seed=0, size=(16, 8))[0]
        save_image(sample.image, tmp_path / "x.png")
        assert np.array_equal(load_image(tmp_path / "x.png", None), sample.image)

    @pytest.mark.parametrize(
        "bad",
        [np.zeros((4, 4)), np.full((4, 4, 3), 1.5), np.full((4, 4, 3), np.nan)],
        ids=["grayscale", "out-of-range", "nan"],
    )
    def test_invalid_buffers_not_saved(self, tmp_path: Path, bad: np.ndarray):
        with pytest.raises(ShapeError):
            save_image(bad, tmp_path / "bad.png")
        assert not (tmp_path / "bad.png").exists()


class TestWriteDataset:
    """Market layout writer."""

    def test_layout_and_reload(self, tmp_path: Path):
        samples = generate_synthetic_dataset(10, 8, 4, seed=7, size=(16, 8))
        counts = write_dataset(samples, tmp_path)

        assert counts == {"train": 60, "query": 10, "gallery": 10}
        files = sorted(p.name for p in (tmp_path / "query").iterdir())
        assert files[0] == "0001_c0s1_000000.png"

        train = load_dataset(tmp_path, Split.TRAIN, size=(16, 8))
        assert len(train) == 60
        assert sorted({s.identity for s in train}) == list(range(10))

    def test_rewrite_gives_identical_bytes(self, tmp_path: Path):
        samples = generate_synthetic_dataset(2, 3, 2, seed=7, size=(16, 8))
        write_dataset(samples, tmp_path / "a")
        write_dataset(samples, tmp_path / "b")
        for path in sorted((tmp_path / "a").rglob("*.png")):
            twin = tmp_path / "b" / path.relative_to(tmp_path / "a")
            assert path.read_bytes() == twin.read_bytes()


class TestHeldInSplit:
    def test_first_image_per_identity_is_query(self, toy_samples):
        query, gallery = held_in_split(toy_samples)
        assert len(query) == 4
        assert len(gallery) == 12
        assert [s.pid for s in query] == [1, 2, 3, 4]


def _grid(n_ids: int, per_id: int) -> list[PersonSample]:
    image = np.zeros((2, 2, 3), dtype=np.float32)
    return [
        PersonSample(image=image, identity=i, camera=0, pid=i + 1)
        for i in range(n_ids)
        for _ in range(per_id)
    ]


class TestSampler:
    """PK batches."""

    def test_batch_shape(self):
        batch = sample_batch(_grid(30, 4), 25, 4, np.random.default_rng(0))
        assert len(batch) == 100
        counts = Counter(batch.labels)
        assert len(counts) == 25
        assert set(counts.values()) == {4}

    def test_exact_cover(self):
        dataset = _grid(2, 2)
        batch = sample_batch(dataset, 2, 2, np.random.default_rng(0))
        assert sorted(id(s) for s in batch.samples) == sorted(id(s) for s in dataset)

    def test_too_many_identities_requested(self):
        with pytest.raises(DatasetError):
            sample_batch(_grid(10, 2), 11, 2, np.random.default_rng(0))

    def test_small_identities_sampled_with_replacement(self):
        batch = sample_batch(_grid(3, 1), 2, 4, np.random.default_rng(0))
        assert len(batch) == 8

    def test_epoch_visits_every_identity(self):
        sampler = IdentitySampler(_grid(10, 4), 5, 2, np.random.default_rng(1))
        seen = set()
        for _ in range(sampler.batches_per_epoch):
            seen.update(sampler.sample_batch().labels)
        assert seen == set(range(10))

    def test_sampler_state_cycles_identities(self):
        dataset = _grid(10, 4)
        sampler = IdentitySampler(dataset, 5, 2, np.random.default_rng(1))
        first = set(sample_batch(dataset, 5, 2, sampler).labels)
        second = set(sample_batch(dataset, 5, 2, sampler).labels)
        assert first.isdisjoint(second)
        assert first | second == set(range(10))

    def test_sampler_state_for_other_dataset_rejected(self):
        sampler = IdentitySampler(_grid(10, 4), 5, 2, np.random.default_rng(1))
        with pytest.raises(DatasetError):
            sample_batch(_grid(10, 4), 5, 2, sampler)

    def test_junk_never_sampled(self):
        dataset = _grid(3, 2) + [
            PersonSample(np.zeros((2, 2, 3), np.float32), -1, camera=0, pid=-1, is_junk=True)
        ]
        sampler = IdentitySampler(dataset, 3, 2, np.random.default_rng(0))
        for _ in range(5):
            assert all(not s.is_junk for s in sampler.sample_batch().samples)
