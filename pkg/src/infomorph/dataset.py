"""MNIST IDX loading, train/validation splitting and seeded batching."""
from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class IdxError(ValueError):
    pass


@dataclass
class DatasetSplit:
    images: np.ndarray  # (n, 784) float in [0, 1]
    labels: np.ndarray  # (n,) int in [0, 9]
    role: str = "train"

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self):
        return len(self.labels)

    def subset(self, index, role: str | None = None) -> "DatasetSplit":
        return DatasetSplit(self.images[index], self.labels[index], role or self.role)


def _read_bytes(path) -> bytes:
    data = Path(path).read_bytes()
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    return data


def read_idx(path, magic: int) -> np.ndarray:
    """Parse an unsigned-byte IDX file (plain or gzip) into an array."""
    data = _read_bytes(path)
    if len(data) < 8:
        raise IdxError(f"{path}: truncated header ({len(data)} bytes)")
    (found,) = struct.unpack(">I", data[:4])
    if found != magic:
        raise IdxError(f"{path}: bad magic 0x{found:08x}, expected 0x{magic:08x}")
    ndim = found & 0xFF
    header = 4 + 4 * ndim
    if len(data) < header:
        raise IdxError(f"{path}: truncated header, expected {header} bytes, got {len(data)}")
    dims = struct.unpack(f">{ndim}I", data[4:header])
    expected = header + int(np.prod(dims))
    if len(data) != expected:
        raise IdxError(f"{path}: expected {expected} bytes for shape {dims}, got {len(data)}")
    return np.frombuffer(data, dtype=np.uint8, offset=header).reshape(dims)


def write_idx(path, array: np.ndarray) -> None:
    array = np.asarray(array, dtype=np.uint8)
    magic = 0x00000800 | array.ndim
    with open(path, "wb") as fh:
        fh.write(struct.pack(f">I{array.ndim}I", magic, *array.shape))
        fh.write(array.tobytes())


def load_idx(images_path, labels_path, role: str = "train") -> DatasetSplit:
    images = read_idx(images_path, IMAGE_MAGIC)
    labels = read_idx(labels_path, LABEL_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise IdxError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    if labels.size and labels.max() > 9:
        raise IdxError(f"{labels_path}: label {labels.max()} out of range")
    flat = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return DatasetSplit(flat, labels.astype(np.int64), role)


def _find(root: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz", stem.replace("-idx", ".idx")):
        if (root / name).exists():
            return root / name
    raise FileNotFoundError(f"{stem} not found in {root}")


def mnist_root(root=None) -> Path:
    root = root or os.environ.get("INFOMORPH_MNIST_DIR")
    if not root:
        raise FileNotFoundError("no MNIST directory given (set INFOMORPH_MNIST_DIR)")
    return Path(root)


def load_mnist(root=None, split: str = "train") -> DatasetSplit:
    """Load ``train`` or ``test`` from a directory holding the four IDX files."""
    root = mnist_root(root)
    img, lab = MNIST_FILES[split]
    return load_idx(_find(root, img), _find(root, lab), role=split)


def split_train_validation(split: DatasetSplit, fraction: float = 0.2, seed: int = 0):
    if not 0 < fraction < 1:
        raise ValueError("validation fraction must lie in (0, 1)")
    perm = np.random.default_rng(seed).permutation(len(split))
    n_val = int(round(fraction * len(split)))
    return split.subset(np.sort(perm[n_val:]), "train"), split.subset(np.sort(perm[:n_val]), "validation")


def batches(split: DatasetSplit, batch_size: int, seed: int = 0, epoch: int = 0,
            shuffle: bool = True) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield ``(images, labels)``; the order depends only on ``(seed, epoch)``."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    n = len(split)
    order = np.random.default_rng([seed, epoch]).permutation(n) if shuffle else np.arange(n)
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        yield split.images[idx], split.labels[idx]
