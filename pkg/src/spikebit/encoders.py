"""Spike encoders: rate, time-to-first-spike, bit planes, and hybrids.

All encoders take an integer image batch and return a spike train with a
leading time axis.  The hybrid temporal-bit scheme concatenates a TTFS
segment with the image's bit planes along that axis, so a batch of 8-bit
images with a 9-step TTFS window becomes a 17-step train.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import DType, SeededRng, Tensor, concat_axis0

LSB = "LSB"
MSB = "MSB"

ENCODING_TAGS = ("rate", "ttfs", "bitplane", "hybrid_rate_bit", "hybrid_temporal_bit")


class EncodingError(ValueError):
    """Invalid encoder input or configuration."""


@dataclass(frozen=True)
class ImageBatch:
    """Unnormalized integer pixel intensities, shape (N, C, H, W)."""

    pixels: Tensor
    x_max: int

    def __post_init__(self) -> None:
        if self.x_max < 1:
            raise EncodingError(f"x_max must be positive, got {self.x_max}")
        if self.pixels.dtype is not DType.INT64:
            raise EncodingError("pixels must be an int64 tensor")
        if self.pixels.rank != 4:
            raise EncodingError(f"pixels must have shape (N, C, H, W), got {self.pixels.shape}")
        v = self.pixels.data
        if v.size and (v.min() < 0 or v.max() > self.x_max):
            raise EncodingError(
                f"pixel values must lie in [0, {self.x_max}], "
                f"got range [{v.min()}, {v.max()}]"
            )

    @property
    def shape(self) -> tuple[int, ...]:
        return self.pixels.shape


@dataclass(frozen=True)
class BitPlaneStack:
    """Ordered binary planes, shape (n_bit, N, C, H, W)."""

    planes: Tensor
    n_bit: int
    order: str

    def __post_init__(self) -> None:
        if self.order not in (LSB, MSB):
            raise EncodingError(f"order must be LSB or MSB, got {self.order!r}")
        if self.planes.dtype is not DType.BIT:
            raise EncodingError("planes must be a bit tensor")
        if self.planes.shape[0] != self.n_bit:
            raise EncodingError("leading extent must equal n_bit")


@dataclass(frozen=True)
class SpikeTrain:
    """Binary tensor with a leading time axis, shape (T, N, C, H, W)."""

    spikes: Tensor
    t_total: int
    encoding_tag: str

    def __post_init__(self) -> None:
        if self.encoding_tag not in ENCODING_TAGS:
            raise EncodingError(f"unknown encoding tag {self.encoding_tag!r}")
        if self.spikes.shape[0] != self.t_total:
            raise EncodingError(
                f"t_total {self.t_total} does not match leading extent {self.spikes.shape[0]}"
            )


@dataclass(frozen=True)
class EncoderConfig:
    """Windows and modes shared by the encoders.

    t_ttfs is the maximum allowable firing time T of the temporal code;
    it must be at least 2 so distinct intensities can map to distinct
    steps.  rounding picks how the real-valued firing time is snapped to
    a step index: "nearest" (ties away from zero) or "floor".
    """

    t_ttfs: int = 9
    t_rate: int = 9
    bit_order: str = MSB
    rounding: str = "nearest"

    def __post_init__(self) -> None:
        if self.t_ttfs < 2:
            raise EncodingError(f"t_ttfs must be >= 2, got {self.t_ttfs}")
        if self.t_rate < 1:
            raise EncodingError(f"t_rate must be >= 1, got {self.t_rate}")
        if self.bit_order not in (LSB, MSB):
            raise EncodingError(f"bit_order must be LSB or MSB, got {self.bit_order!r}")
        if self.rounding not in ("nearest", "floor"):
            raise EncodingError(f"rounding must be nearest or floor, got {self.rounding!r}")


def bit_count(x_max: int) -> int:
    """Number of bits needed to represent x_max: floor(log2(x_max)) + 1."""
    if x_max < 1:
        raise EncodingError(f"x_max must be >= 1, got {x_max}")
    return int(x_max).bit_length()


def bitplane_encode(img: ImageBatch, order: str = MSB) -> BitPlaneStack:
    """Extract every bit plane of the batch.

    Plane k in LSB indexing is floor(pixels / 2^k) mod 2; MSB mode
    reverses the plane order.  Each plane keeps the full (N, C, H, W)
    shape of the batch.
    """
    if order not in (LSB, MSB):
        raise EncodingError(f"order must be LSB or MSB, got {order!r}")
    n_bit = bit_count(img.x_max)
    px = img.pixels.data
    planes = np.empty((n_bit,) + px.shape, dtype=np.uint8)
    for k in range(n_bit):
        planes[k] = (px >> k) & 1
    if order == MSB:
        planes = planes[::-1]
    return BitPlaneStack(Tensor(planes, DType.BIT), n_bit, order)


def reconstruct_from_planes(stack: BitPlaneStack) -> np.ndarray:
    """Rebuild pixel intensities from a plane stack (sum of planes times 2^k)."""
    planes = stack.planes.data
    if stack.order == MSB:
        planes = planes[::-1]
    weights = (1 << np.arange(stack.n_bit, dtype=np.int64))
    return np.tensordot(weights, planes.astype(np.int64), axes=(0, 0))


def _firing_times(img: ImageBatch, cfg: EncoderConfig) -> np.ndarray:
    x = img.pixels.data / float(img.x_max)
    t_f = (cfg.t_ttfs - 1) * (1.0 - x)
    if cfg.rounding == "nearest":
        # ties away from zero; np.round would go to even
        idx = np.floor(t_f + 0.5)
    else:
        idx = np.floor(t_f)
    return idx.astype(np.int64)


def ttfs_encode(img: ImageBatch, cfg: EncoderConfig) -> SpikeTrain:
    """Time-to-first-spike code: a single spike per pixel whose step index
    is (T - 1) * (1 - pixel / x_max), discretized per cfg.rounding.
    Full intensity fires at step 0, zero intensity at step T - 1."""
    idx = _firing_times(img, cfg)
    steps = np.arange(cfg.t_ttfs, dtype=np.int64).reshape((-1,) + (1,) * idx.ndim)
    spikes = (steps == idx[np.newaxis]).astype(np.uint8)
    return SpikeTrain(Tensor(spikes, DType.BIT), cfg.t_ttfs, "ttfs")


def rate_encode(img: ImageBatch, cfg: EncoderConfig, rng: SeededRng) -> SpikeTrain:
    """Rate code: each timestep is an independent Bernoulli draw with
    p = pixel / x_max."""
    p = img.pixels.data / float(img.x_max)
    draws = rng.random((cfg.t_rate,) + img.shape)
    spikes = (draws < p[np.newaxis]).astype(np.uint8)
    return SpikeTrain(Tensor(spikes, DType.BIT), cfg.t_rate, "rate")


def bitplane_train(img: ImageBatch, order: str = MSB) -> SpikeTrain:
    """Bit planes viewed as a spike train: one timestep per plane."""
    stack = bitplane_encode(img, order)
    return SpikeTrain(stack.planes, stack.n_bit, "bitplane")


def hybrid_temporal_bit_encode(img: ImageBatch, cfg: EncoderConfig) -> SpikeTrain:
    """TTFS segment followed by the bit planes along the time axis."""
    head = ttfs_encode(img, cfg)
    tail = bitplane_encode(img, cfg.bit_order)
    spikes = concat_axis0([head.spikes, tail.planes])
    return SpikeTrain(spikes, cfg.t_ttfs + tail.n_bit, "hybrid_temporal_bit")


def hybrid_rate_bit_encode(img: ImageBatch, cfg: EncoderConfig, rng: SeededRng) -> SpikeTrain:
    """Rate segment followed by the bit planes along the time axis."""
    head = rate_encode(img, cfg, rng)
    tail = bitplane_encode(img, cfg.bit_order)
    spikes = concat_axis0([head.spikes, tail.planes])
    return SpikeTrain(spikes, cfg.t_rate + tail.n_bit, "hybrid_rate_bit")


def encode(name: str, img: ImageBatch, cfg: EncoderConfig, rng: SeededRng | None = None) -> SpikeTrain:
    """Dispatch by encoder name; rng is required for the stochastic codes."""
    if name in ("rate", "hybrid_rate_bit") and rng is None:
        raise EncodingError(f"encoder {name!r} needs a SeededRng")
    if name == "rate":
        return rate_encode(img, cfg, rng)
    if name == "ttfs":
        return ttfs_encode(img, cfg)
    if name == "bitplane":
        return bitplane_train(img, cfg.bit_order)
    if name == "hybrid_temporal_bit":
        return hybrid_temporal_bit_encode(img, cfg)
    if name == "hybrid_rate_bit":
        return hybrid_rate_bit_encode(img, cfg, rng)
    raise EncodingError(f"unknown encoder {name!r}")


def train_length(name: str, cfg: EncoderConfig, x_max: int) -> int:
    """Timesteps the named encoder will produce for images capped at x_max."""
    n_bit = bit_count(x_max)
    return {
        "rate": cfg.t_rate,
        "ttfs": cfg.t_ttfs,
        "bitplane": n_bit,
        "hybrid_rate_bit": cfg.t_rate + n_bit,
        "hybrid_temporal_bit": cfg.t_ttfs + n_bit,
    }[name]
