"""Dataset ingestion: IDX and CIFAR-10 binary formats, deterministic
splits and batching, plus a synthetic fixture for fast tests.

No download logic lives here; callers point at files on disk.  Gzipped
IDX files are accepted transparently.
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass, replace
from typing import Iterator

import numpy as np

from .encoders import ImageBatch
from .tensor import DType, SeededRng, Tensor

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD_BYTES = 3073  # 1 label byte + 3 * 32 * 32 pixels
CIFAR_TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
CIFAR_TEST_FILE = "test_batch.bin"

DATASET_NAMES = ("synthetic", "mnist", "kmnist", "fmnist", "cifar10")


class DataError(Exception):
    """Base class for loader failures."""


class FormatError(DataError):
    """Bad magic number or malformed container."""


class LengthError(DataError):
    """File shorter than its header or record layout promises."""


class ConsistencyError(DataError):
    """Cross-file disagreement, e.g. image/label counts."""


@dataclass(frozen=True)
class Dataset:
    images: ImageBatch
    labels: Tensor
    class_count: int
    name: str

    def __post_init__(self) -> None:
        n = self.images.shape[0]
        if self.labels.shape != (n,):
            raise ConsistencyError(
                f"{self.labels.shape[0]} labels for {n} images in {self.name!r}"
            )
        lab = self.labels.data
        if lab.size and (lab.min() < 0 or lab.max() >= self.class_count):
            raise ConsistencyError(
                f"labels outside [0, {self.class_count}) in {self.name!r}"
            )

    def __len__(self) -> int:
        return self.images.shape[0]

    def take(self, n: int) -> "Dataset":
        """Prefix subset of the first n samples."""
        n = min(n, len(self))
        return replace(
            self,
            images=ImageBatch(Tensor(self.images.pixels.data[:n], DType.INT64),
                              self.images.x_max),
            labels=Tensor(self.labels.data[:n], DType.INT64),
        )


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0
    use_predefined: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")


def _open_maybe_gzip(path: str):
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_exact(fh, count: int, path: str) -> bytes:
    buf = fh.read(count)
    if len(buf) != count:
        raise LengthError(f"{path}: expected {count} bytes, got {len(buf)}")
    return buf


def load_idx(images_path: str, labels_path: str, name: str = "idx") -> Dataset:
    """Parse a big-endian IDX image/label file pair into a Dataset.

    Pixels come out as int64 in [0, 255] with shape (N, 1, H, W).
    """
    with _open_maybe_gzip(images_path) as fh:
        magic, n, h, w = struct.unpack(">IIII", _read_exact(fh, 16, images_path))
        if magic != IDX_IMAGES_MAGIC:
            raise FormatError(
                f"{images_path}: bad image magic 0x{magic:08x}, "
                f"expected 0x{IDX_IMAGES_MAGIC:08x}"
            )
        raw = _read_exact(fh, n * h * w, images_path)
    pixels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64).reshape(n, 1, h, w)

    with _open_maybe_gzip(labels_path) as fh:
        magic, n_labels = struct.unpack(">II", _read_exact(fh, 8, labels_path))
        if magic != IDX_LABELS_MAGIC:
            raise FormatError(
                f"{labels_path}: bad label magic 0x{magic:08x}, "
                f"expected 0x{IDX_LABELS_MAGIC:08x}"
            )
        raw = _read_exact(fh, n_labels, labels_path)
    labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)

    if n_labels != n:
        raise ConsistencyError(
            f"{images_path} holds {n} images but {labels_path} holds {n_labels} labels"
        )
    class_count = int(labels.max()) + 1 if labels.size else 1
    return Dataset(
        images=ImageBatch(Tensor(pixels, DType.INT64), x_max=255),
        labels=Tensor(labels, DType.INT64),
        class_count=max(class_count, 2),
        name=name,
    )


def _load_cifar_file(path: str) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) == 0 or len(raw) % CIFAR_RECORD_BYTES:
        raise LengthError(
            f"{path}: size {len(raw)} is not a multiple of {CIFAR_RECORD_BYTES}-byte records"
        )
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
    labels = records[:, 0].astype(np.int64)
    pixels = records[:, 1:].astype(np.int64).reshape(-1, 3, 32, 32)
    return pixels, labels


def load_cifar10_binary(dir_path: str, which: str = "train") -> Dataset:
    """Load the CIFAR-10 binary batches from a directory.

    which selects the 5 training files or the canonical test batch.
    """
    if which == "train":
        files = [os.path.join(dir_path, f) for f in CIFAR_TRAIN_FILES]
    elif which == "test":
        files = [os.path.join(dir_path, CIFAR_TEST_FILE)]
    else:
        raise ValueError(f"which must be train or test, got {which!r}")
    for f in files:
        if not os.path.exists(f):
            raise FormatError(f"missing CIFAR-10 batch file {f}")
    parts = [_load_cifar_file(f) for f in files]
    pixels = np.concatenate([p for p, _ in parts], axis=0)
    labels = np.concatenate([l for _, l in parts], axis=0)
    return Dataset(
        images=ImageBatch(Tensor(pixels, DType.INT64), x_max=255),
        labels=Tensor(labels, DType.INT64),
        class_count=10,
        name=f"cifar10-{which}",
    )


def split(ds: Dataset, spec: SplitSpec,
          predefined_val: Dataset | None = None) -> tuple[Dataset, Dataset]:
    """Seeded permutation then prefix/suffix split into (train, val).

    With use_predefined and a canonical validation set supplied, the
    dataset is used whole for training and the canonical set for
    validation.
    """
    if spec.use_predefined and predefined_val is not None:
        return ds, predefined_val
    n = len(ds)
    if n < 2:
        raise ValueError(f"need at least 2 samples to split, got {n}")
    n_train = int(n * spec.train_fraction)
    n_train = min(max(n_train, 1), n - 1)
    perm = SeededRng(spec.seed).permutation(n)
    px = ds.images.pixels.data
    lab = ds.labels.data

    def subset(idx: np.ndarray, suffix: str) -> Dataset:
        return Dataset(
            images=ImageBatch(Tensor(px[idx], DType.INT64), ds.images.x_max),
            labels=Tensor(lab[idx], DType.INT64),
            class_count=ds.class_count,
            name=f"{ds.name}-{suffix}",
        )

    return subset(perm[:n_train], "train"), subset(perm[n_train:], "val")


def batches(ds: Dataset, batch_size: int, rng: SeededRng | None = None,
            shuffle: bool = False) -> Iterator[tuple[ImageBatch, Tensor]]:
    """Yield (ImageBatch, labels) covering every sample exactly once."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    n = len(ds)
    if shuffle:
        if rng is None:
            raise ValueError("shuffle=True requires a SeededRng")
        order = rng.permutation(n)
    else:
        order = np.arange(n)
    px = ds.images.pixels.data
    lab = ds.labels.data
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        yield (
            ImageBatch(Tensor(px[idx], DType.INT64), ds.images.x_max),
            Tensor(lab[idx], DType.INT64),
        )


def synthetic_dataset(n: int, k: int, rng: SeededRng) -> Dataset:
    """Class-dependent intensity blobs, 16x16 single channel, x_max 255.

    Class c images sit near a base intensity level, far enough apart that
    the mean pixel separates classes by a wide margin.  Labels are
    assigned round-robin, so the histogram is balanced within one.
    """
    if k < 2 or n < k:
        raise ValueError(f"need n >= k >= 2, got n={n}, k={k}")
    bases = np.round(np.linspace(40, 215, k)).astype(np.int64)
    labels = np.arange(n, dtype=np.int64) % k
    noise = rng.integers(-25, 26, (n, 1, 16, 16))
    pixels = np.clip(bases[labels][:, None, None, None] + noise, 0, 255)
    return Dataset(
        images=ImageBatch(Tensor(pixels, DType.INT64), x_max=255),
        labels=Tensor(labels, DType.INT64),
        class_count=k,
        name="synthetic",
    )


def _idx_pair(root: str, prefix: str) -> tuple[str, str]:
    def find(stem: str) -> str:
        for suffix in ("", ".gz"):
            path = os.path.join(root, stem + suffix)
            if os.path.exists(path):
                return path
        raise FormatError(f"missing IDX file {os.path.join(root, stem)}[.gz]")
    return find(f"{prefix}-images-idx3-ubyte"), find(f"{prefix}-labels-idx1-ubyte")


def load_image_dataset(name: str, root: str) -> tuple[Dataset, Dataset | None]:
    """Load a named dataset from its conventional layout under root.

    Returns (train, canonical_test); test is None when the layout has no
    predefined evaluation files on disk.
    """
    base = os.path.join(root, name)
    if name in ("mnist", "kmnist", "fmnist"):
        train = load_idx(*_idx_pair(base, "train"), name=name)
        test = None
        try:
            test = load_idx(*_idx_pair(base, "t10k"), name=f"{name}-t10k")
        except FormatError:
            pass
        return train, test
    if name == "cifar10":
        train = load_cifar10_binary(base, "train")
        try:
            test = load_cifar10_binary(base, "test")
        except FormatError:
            test = None
        return train, test
    raise ValueError(f"unknown dataset {name!r}; choose from {DATASET_NAMES}")
