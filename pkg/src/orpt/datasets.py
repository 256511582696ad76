"""MNIST (IDX) and CIFAR-10 (binary batch) loaders and feature export."""

from __future__ import annotations

import gzip
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .featureset import FeatureSetWriter, FormatError
from .numtheory import DomainError
from .subband import image_features

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801
CIFAR_RECORD = 1 + 3 * 32 * 32
IMAGE_SIDES = {"mnist": 28, "cifar10": 32}

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
CIFAR_FILES = {
    "train": tuple(f"data_batch_{i}.bin" for i in range(1, 6)),
    "test": ("test_batch.bin",),
}


@dataclass(frozen=True, eq=False)
class LabeledImageSet:
    images: np.ndarray  # (count, planes, N, N) float32 in [0, 1]
    labels: np.ndarray  # (count,) uint8
    class_count: int

    def __post_init__(self):
        if self.images.ndim != 4 or self.images.shape[2] != self.images.shape[3]:
            raise DomainError(f"images must be (count, planes, N, N), got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise DomainError("images and labels differ in length")
        if len(self.labels) and int(self.labels.max()) >= self.class_count:
            raise DomainError("label outside class range")

    def __len__(self):
        return len(self.labels)

    @property
    def side(self) -> int:
        return self.images.shape[-1]

    @property
    def planes(self) -> int:
        return self.images.shape[1]

    def head(self, limit: int | None) -> "LabeledImageSet":
        if limit is None or limit >= len(self):
            return self
        return LabeledImageSet(self.images[:limit], self.labels[:limit], self.class_count)


def normalize(raw: np.ndarray) -> np.ndarray:
    """Bytes to float32 intensities in ``[0, 1]`` (fixed divisor 255)."""
    return (raw.astype(np.float64) / 255.0).astype(np.float32)


def _read_bytes(path) -> bytes:
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(2)
    opener = gzip.open if head == b"\x1f\x8b" else open
    with opener(path, "rb") as fh:
        return fh.read()


def read_idx(path, magic: int) -> np.ndarray:
    """Parse a big-endian IDX file of unsigned bytes."""
    data = _read_bytes(path)
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(data) < header:
        raise FormatError(f"{path}: truncated header at offset {len(data)}, need {header} bytes")
    (found,) = struct.unpack_from(">I", data, 0)
    if found != magic:
        raise FormatError(f"{path}: bad magic 0x{found:08x} at offset 0, expected 0x{magic:08x}")
    dims = struct.unpack_from(f">{ndim}I", data, 4)
    size = int(np.prod(dims))
    if len(data) - header < size:
        raise FormatError(
            f"{path}: truncated payload at offset {len(data)}, expected {header + size} bytes"
        )
    return np.frombuffer(data, dtype=np.uint8, count=size, offset=header).reshape(dims)


def load_mnist(images_path, labels_path) -> LabeledImageSet:
    images = read_idx(images_path, IDX_IMAGES)
    labels = read_idx(labels_path, IDX_LABELS)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(
            f"{images_path}: {images.shape[0]} images but {labels_path}: "
            f"{labels.shape[0]} labels (count field at offset 4)"
        )
    return LabeledImageSet(normalize(images)[:, None], labels.copy(), 10)


def load_cifar10(batch_paths) -> LabeledImageSet:
    chunks = []
    for path in batch_paths:
        data = _read_bytes(path)
        if not data or len(data) % CIFAR_RECORD:
            raise FormatError(
                f"{path}: size {len(data)} is not a positive multiple of {CIFAR_RECORD} "
                f"(partial record at offset {len(data) - len(data) % CIFAR_RECORD})"
            )
        chunks.append(np.frombuffer(data, dtype=np.uint8).reshape(-1, CIFAR_RECORD))
    if not chunks:
        raise FormatError("no CIFAR-10 batch files given")
    rec = np.concatenate(chunks)
    labels = rec[:, 0].copy()
    if labels.max() >= 10:
        bad = int(np.argmax(labels >= 10))
        raise FormatError(f"label {labels[bad]} >= 10 in record {bad}")
    images = normalize(rec[:, 1:].reshape(-1, 3, 32, 32))
    return LabeledImageSet(images, labels, 10)


def _find(data_dir: Path, name: str) -> Path:
    for cand in (name, name + ".gz", name.replace("-idx", ".idx")):
        for base in (data_dir, data_dir / "cifar-10-batches-bin", data_dir / "mnist"):
            p = base / cand
            if p.exists():
                return p
    raise FileNotFoundError(f"{name} not found under {data_dir}")


def dataset_paths(dataset: str, split: str, data_dir) -> list[Path]:
    data_dir = Path(data_dir)
    table = {"mnist": MNIST_FILES, "cifar10": CIFAR_FILES}.get(dataset)
    if table is None:
        raise DomainError(f"unknown dataset {dataset!r}")
    if split not in table:
        raise DomainError(f"unknown split {split!r}")
    return [_find(data_dir, name) for name in table[split]]


def load_dataset(dataset: str, split: str, data_dir) -> LabeledImageSet:
    paths = dataset_paths(dataset, split, data_dir)
    if dataset == "mnist":
        return load_mnist(*paths)
    return load_cifar10(paths)


def iter_features(images: LabeledImageSet, d: int, chunk: int = 2048, threads: int = 1):
    """Yield ``(values, labels)`` chunks of packed float32 features in input order."""
    if images.side % d:
        raise DomainError(f"divisor {d} does not divide image side {images.side}")
    starts = range(0, len(images), chunk)

    def work(s):
        block = images.images[s : s + chunk].astype(np.float64)
        return image_features(block, d).astype(np.float32), images.labels[s : s + chunk]

    if threads <= 1:
        for s in starts:
            yield work(s)
    else:
        with ThreadPoolExecutor(threads) as pool:
            yield from pool.map(work, starts)


def feature_arrays(images: LabeledImageSet, d: int, threads: int = 1):
    parts = list(iter_features(images, d, threads=threads))
    if not parts:
        n = images.side // d
        return np.zeros((0, n * n, images.planes * d * d), np.float32), images.labels[:0]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def build_feature_set(images: LabeledImageSet, d: int, path, threads: int = 1):
    """Transform, pack and write every image; returns the writer summary."""
    if images.side % d:
        raise DomainError(f"divisor {d} does not divide image side {images.side}")
    n = images.side // d
    with FeatureSetWriter(path, n * n, images.planes * d * d, images.class_count) as w:
        for values, labels in iter_features(images, d, threads=threads):
            w.write(values, labels)
    return w.count, w.T, w.F, w.classes
