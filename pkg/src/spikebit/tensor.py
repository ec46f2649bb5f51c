"""Dense numeric substrate shared by every other module.

Tensors are thin, immutable wrappers around row-major (C-order) numpy
arrays with one of three logical dtypes: real64, int64, or bit.  Bit
tensors are stored as uint8 and may only contain 0 or 1.  All operations
here are pure; nothing mutates its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence, Union

import numpy as np


class DType(Enum):
    REAL64 = "real64"
    INT64 = "int64"
    BIT = "bit"


_NUMPY_DTYPE = {
    DType.REAL64: np.float64,
    DType.INT64: np.int64,
    DType.BIT: np.uint8,
}


class TensorError(ValueError):
    """Invalid tensor construction or operation."""


@dataclass(frozen=True)
class Tensor:
    """Immutable dense tensor: row-major data buffer plus logical dtype."""

    data: np.ndarray
    dtype: DType

    def __post_init__(self) -> None:
        # always own the buffer so the read-only flag cannot be bypassed
        arr = np.array(self.data, dtype=_NUMPY_DTYPE[self.dtype], order="C", copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        if self.dtype is DType.BIT and arr.size and not np.isin(arr, (0, 1)).all():
            raise TensorError("bit tensor contains values outside {0, 1}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def rank(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def flat(self) -> np.ndarray:
        """The underlying row-major buffer, length product(shape)."""
        return self.data.reshape(-1)

    @classmethod
    def from_numpy(cls, arr: np.ndarray, dtype: DType | None = None) -> "Tensor":
        if dtype is None:
            kind = np.asarray(arr).dtype.kind
            dtype = DType.REAL64 if kind == "f" else DType.INT64
        return cls(np.asarray(arr), dtype)

    @classmethod
    def zeros(cls, shape: Sequence[int], dtype: DType = DType.REAL64) -> "Tensor":
        return cls(np.zeros(tuple(shape), dtype=_NUMPY_DTYPE[dtype]), dtype)

    @classmethod
    def full(cls, shape: Sequence[int], value, dtype: DType = DType.REAL64) -> "Tensor":
        return cls(np.full(tuple(shape), value, dtype=_NUMPY_DTYPE[dtype]), dtype)

    def astype(self, dtype: DType) -> "Tensor":
        return Tensor(self.data.astype(_NUMPY_DTYPE[dtype]), dtype)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Tensor):
            return NotImplemented
        return (
            self.dtype is other.dtype
            and self.shape == other.shape
            and bool(np.array_equal(self.data, other.data))
        )


def ravel_index(index: Sequence[int], shape: Sequence[int]) -> int:
    """Row-major flat offset of a multi-index."""
    offset = 0
    for i, (idx, extent) in enumerate(zip(index, shape)):
        if not 0 <= idx < extent:
            raise TensorError(f"index {idx} out of range for axis {i} (extent {extent})")
    for idx, extent in zip(index, shape):
        offset = offset * extent + idx
    return offset


def unravel_index(offset: int, shape: Sequence[int]) -> tuple[int, ...]:
    """Inverse of :func:`ravel_index`."""
    total = int(np.prod(shape, dtype=np.int64)) if len(shape) else 1
    if not 0 <= offset < total:
        raise TensorError(f"offset {offset} out of range for shape {tuple(shape)}")
    out = []
    for extent in reversed(shape):
        out.append(offset % extent)
        offset //= extent
    return tuple(reversed(out))


_ELEMENTWISE_OPS = ("add", "sub", "mul", "div", "floor_div", "mod", "compare_ge")

Scalar = Union[int, float]


def elementwise(op: str, a: Tensor, b: Union[Tensor, Scalar]) -> Tensor:
    """Apply a binary op per element; b may be a scalar.

    Result dtype: compare_ge yields bit, div yields real64, everything
    else yields real64 if either operand is real64 and int64 otherwise
    (bit operands promote to int64 under arithmetic).
    """
    if op not in _ELEMENTWISE_OPS:
        raise TensorError(f"unknown elementwise op {op!r}")
    b_is_tensor = isinstance(b, Tensor)
    if b_is_tensor and b.shape != a.shape:
        raise TensorError(f"shape mismatch: {a.shape} vs {b.shape}")
    bv = b.data if b_is_tensor else b

    if op in ("div", "floor_div", "mod"):
        zero = np.any(bv == 0) if b_is_tensor else bv == 0
        if zero:
            raise TensorError(f"{op} by zero")

    if op == "compare_ge":
        return Tensor((a.data >= bv).astype(np.uint8), DType.BIT)
    if op == "div":
        return Tensor(np.true_divide(a.data, bv), DType.REAL64)

    b_dtype = b.dtype if b_is_tensor else (DType.REAL64 if isinstance(b, float) else DType.INT64)
    out_dtype = DType.REAL64 if DType.REAL64 in (a.dtype, b_dtype) else DType.INT64
    fn = {"add": np.add, "sub": np.subtract, "mul": np.multiply,
          "floor_div": np.floor_divide, "mod": np.mod}[op]
    result = fn(a.data.astype(_NUMPY_DTYPE[out_dtype]), bv)
    return Tensor(result, out_dtype)


def concat_axis0(parts: Iterable[Tensor]) -> Tensor:
    """Concatenate along the leading axis; trailing shapes must agree."""
    parts = list(parts)
    if not parts:
        raise TensorError("concat_axis0 requires a nonempty list")
    first = parts[0]
    for p in parts[1:]:
        if p.shape[1:] != first.shape[1:]:
            raise TensorError(
                f"trailing shape mismatch: {first.shape[1:]} vs {p.shape[1:]}"
            )
        if p.dtype is not first.dtype:
            raise TensorError(f"dtype mismatch: {first.dtype} vs {p.dtype}")
    if len(parts) == 1:
        return first
    return Tensor(np.concatenate([p.data for p in parts], axis=0), first.dtype)


def split_axis0(t: Tensor, extents: Sequence[int]) -> list[Tensor]:
    """Split along the leading axis at the recorded extents (concat inverse)."""
    if sum(extents) != t.shape[0]:
        raise TensorError(f"extents {list(extents)} do not sum to leading axis {t.shape[0]}")
    out, start = [], 0
    for n in extents:
        out.append(Tensor(t.data[start:start + n].copy(), t.dtype))
        start += n
    return out


def reduce(op: str, t: Tensor, axis: int) -> Tensor:
    """Reduce one axis away. sum keeps an integer dtype for integer inputs,
    mean always yields real64, argmax yields int64 indices."""
    if not 0 <= axis < t.rank:
        raise TensorError(f"axis {axis} out of range for rank {t.rank}")
    if op == "sum":
        out_dtype = DType.REAL64 if t.dtype is DType.REAL64 else DType.INT64
        return Tensor(t.data.sum(axis=axis, dtype=_NUMPY_DTYPE[out_dtype]), out_dtype)
    if op == "mean":
        return Tensor(t.data.mean(axis=axis, dtype=np.float64), DType.REAL64)
    if op == "argmax":
        if t.shape[axis] == 0:
            raise TensorError("argmax over an empty axis")
        return Tensor(np.argmax(t.data, axis=axis).astype(np.int64), DType.INT64)
    raise TensorError(f"unknown reduce op {op!r}")


RNG_ALGORITHM = "pcg64"


@dataclass
class SeededRng:
    """Deterministic random stream, PCG64 under the hood.

    Identical (seed, stream_keys) produce identical draws across runs and
    platforms.  Single-owner mutable state: never share one instance
    between concurrent consumers; derive children instead.
    """

    seed: int
    stream_keys: tuple[int, ...] = ()
    algorithm: str = field(default=RNG_ALGORITHM, init=False)

    def __post_init__(self) -> None:
        if not 0 <= self.seed < 2 ** 64:
            raise TensorError("seed must fit in 64 unsigned bits")
        ss = np.random.SeedSequence(self.seed, spawn_key=self.stream_keys)
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def child(self, *keys: int) -> "SeededRng":
        """Independent substream addressed by integer keys."""
        return SeededRng(self.seed, self.stream_keys + tuple(keys))

    def random(self, shape: Sequence[int] | int | None = None) -> np.ndarray:
        return self._gen.random(shape)

    def uniform(self, low: float, high: float, shape: Sequence[int] | int | None = None) -> np.ndarray:
        return self._gen.uniform(low, high, shape)

    def integers(self, low: int, high: int, shape: Sequence[int] | int | None = None) -> np.ndarray:
        return self._gen.integers(low, high, shape, dtype=np.int64)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)
