"""Shared fixtures: byte-exact IDX and CIFAR-10 binary files, built from
scratch so loader tests never depend on external data."""

import gzip
import struct

import numpy as np
import pytest

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def idx_image_bytes(images: np.ndarray) -> bytes:
    """Serialize (N, H, W) uint8 images per the IDX container layout."""
    n, h, w = images.shape
    return struct.pack(">IIII", IDX_IMAGES_MAGIC, n, h, w) + images.astype(np.uint8).tobytes()


def idx_label_bytes(labels: np.ndarray) -> bytes:
    return struct.pack(">II", IDX_LABELS_MAGIC, len(labels)) + bytes(int(x) for x in labels)


def cifar_record_bytes(label: int, pixels: np.ndarray) -> bytes:
    """One 3073-byte record: label byte then 3*32*32 channel-major pixels."""
    assert pixels.shape == (3, 32, 32)
    return bytes([label]) + pixels.astype(np.uint8).tobytes()


@pytest.fixture
def idx_fixture(tmp_path):
    """A 4-image, 28x28 IDX pair with deterministic pixel patterns."""
    rng = np.random.default_rng(1234)
    images = rng.integers(0, 256, (4, 28, 28), dtype=np.int64).astype(np.uint8)
    labels = np.array([3, 1, 4, 1], dtype=np.uint8)
    img_path = tmp_path / "train-images-idx3-ubyte"
    lab_path = tmp_path / "train-labels-idx1-ubyte"
    img_path.write_bytes(idx_image_bytes(images))
    lab_path.write_bytes(idx_label_bytes(labels))
    return str(img_path), str(lab_path), images, labels


@pytest.fixture
def idx_fixture_gz(tmp_path):
    rng = np.random.default_rng(99)
    images = rng.integers(0, 256, (3, 8, 8), dtype=np.int64).astype(np.uint8)
    labels = np.array([0, 2, 1], dtype=np.uint8)
    img_path = tmp_path / "train-images-idx3-ubyte.gz"
    lab_path = tmp_path / "train-labels-idx1-ubyte.gz"
    img_path.write_bytes(gzip.compress(idx_image_bytes(images)))
    lab_path.write_bytes(gzip.compress(idx_label_bytes(labels)))
    return str(img_path), str(lab_path), images, labels


@pytest.fixture
def cifar_fixture(tmp_path):
    """A CIFAR-10 binary layout with 2 records per batch file."""
    rng = np.random.default_rng(777)
    cdir = tmp_path / "cifar10"
    cdir.mkdir()
    all_pixels, all_labels = [], []
    for i in range(1, 6):
        blob = b""
        for _ in range(2):
            label = int(rng.integers(0, 10))
            pixels = rng.integers(0, 256, (3, 32, 32), dtype=np.int64).astype(np.uint8)
            blob += cifar_record_bytes(label, pixels)
            all_pixels.append(pixels)
            all_labels.append(label)
        (cdir / f"data_batch_{i}.bin").write_bytes(blob)
    test_blob = b""
    for _ in range(2):
        label = int(rng.integers(0, 10))
        pixels = rng.integers(0, 256, (3, 32, 32), dtype=np.int64).astype(np.uint8)
        test_blob += cifar_record_bytes(label, pixels)
    (cdir / "test_batch.bin").write_bytes(test_blob)
    return str(cdir), np.stack(all_pixels), np.array(all_labels)
