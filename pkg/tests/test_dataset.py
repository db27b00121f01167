import gzip

import numpy as np
import pytest

from infomorph.dataset import (IMAGE_MAGIC, LABEL_MAGIC, DatasetSplit, IdxError, batches, load_idx, load_mnist,
                               read_idx, split_train_validation, write_idx)


@pytest.fixture
def idx_pair(tmp_path, rng):
    images = rng.integers(0, 256, (7, 28, 28), dtype=np.uint8)
    labels = rng.integers(0, 10, 7, dtype=np.uint8)
    write_idx(tmp_path / "img", images)
    write_idx(tmp_path / "lab", labels)
    return tmp_path, images, labels


def test_round_trip(idx_pair):
    path, images, labels = idx_pair
    assert np.array_equal(read_idx(path / "img", IMAGE_MAGIC), images)
    assert np.array_equal(read_idx(path / "lab", LABEL_MAGIC), labels)


def test_gzip_is_transparent(idx_pair):
    path, images, _ = idx_pair
    (path / "img.gz").write_bytes(gzip.compress((path / "img").read_bytes()))
    assert np.array_equal(read_idx(path / "img.gz", IMAGE_MAGIC), images)


def test_load_scales_and_flattens(idx_pair):
    path, images, labels = idx_pair
    split = load_idx(path / "img", path / "lab")
    assert split.images.shape == (7, 784)
    assert split.images.max() <= 1.0
    assert np.allclose(split.images[0], images[0].ravel() / 255.0)
    assert np.array_equal(split.labels, labels)


def test_bad_magic(idx_pair):
    path, _, _ = idx_pair
    with pytest.raises(IdxError, match="magic"):
        read_idx(path / "lab", IMAGE_MAGIC)


def test_truncated_payload_reports_sizes(idx_pair):
    path, _, _ = idx_pair
    data = (path / "img").read_bytes()
    (path / "short").write_bytes(data[:-10])
    with pytest.raises(IdxError, match=f"expected {len(data)} bytes"):
        read_idx(path / "short", IMAGE_MAGIC)


def test_truncated_header(tmp_path):
    (tmp_path / "x").write_bytes(b"\x00\x00")
    with pytest.raises(IdxError, match="truncated"):
        read_idx(tmp_path / "x", IMAGE_MAGIC)


def test_count_mismatch(tmp_path, rng):
    write_idx(tmp_path / "img", rng.integers(0, 256, (3, 28, 28), dtype=np.uint8))
    write_idx(tmp_path / "lab", np.zeros(4, dtype=np.uint8))
    with pytest.raises(IdxError):
        load_idx(tmp_path / "img", tmp_path / "lab")


def test_load_mnist_directory(tmp_path, rng, monkeypatch):
    write_idx(tmp_path / "t10k-images-idx3-ubyte", rng.integers(0, 256, (3, 28, 28), dtype=np.uint8))
    write_idx(tmp_path / "t10k-labels-idx1-ubyte", np.arange(3, dtype=np.uint8))
    monkeypatch.setenv("INFOMORPH_MNIST_DIR", str(tmp_path))
    assert len(load_mnist(split="test")) == 3
    with pytest.raises(FileNotFoundError):
        load_mnist(split="train")
    monkeypatch.delenv("INFOMORPH_MNIST_DIR")
    with pytest.raises(FileNotFoundError):
        load_mnist(split="test")


def _split(n):
    return DatasetSplit(np.zeros((n, 784)), np.arange(n) % 10)


def test_validation_split_is_seeded_and_disjoint():
    full = DatasetSplit(np.arange(100.0)[:, None], np.arange(100) % 10)
    tr, val = split_train_validation(full, 0.2, seed=3)
    tr2, val2 = split_train_validation(full, 0.2, seed=3)
    assert len(val) == 20 and len(tr) == 80
    assert np.array_equal(val.images, val2.images)
    assert not set(tr.images.ravel()) & set(val.images.ravel())
    _, val3 = split_train_validation(full, 0.2, seed=4)
    assert not np.array_equal(val.images, val3.images)


@pytest.mark.parametrize("fraction", [0.0, 1.0, -0.1])
def test_validation_fraction_bounds(fraction):
    with pytest.raises(ValueError):
        split_train_validation(_split(10), fraction)


def test_batch_count_and_coverage():
    split = DatasetSplit(np.zeros((48000, 1)), np.arange(48000) % 10)
    sizes = [len(y) for _, y in batches(split, 1024, seed=0, epoch=0)]
    assert len(sizes) == 47 and sizes[-1] == 48000 - 46 * 1024


def test_batches_depend_on_seed_and_epoch():
    split = DatasetSplit(np.arange(50.0)[:, None], np.arange(50) % 10)
    first = lambda s, e: next(batches(split, 10, seed=s, epoch=e))[0].ravel().tolist()
    assert first(0, 0) == first(0, 0)
    assert first(0, 0) != first(0, 1)
    assert first(0, 0) != first(1, 0)
    order = np.concatenate([x.ravel() for x, _ in batches(split, 7, seed=2, epoch=5)])
    assert sorted(order) == list(range(50))


def test_bad_batch_size():
    with pytest.raises(ValueError):
        next(batches(_split(5), 0))
