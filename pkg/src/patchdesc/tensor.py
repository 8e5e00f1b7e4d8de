"""Dense row-major tensors and the handful of operations built on them.

A Tensor is an immutable-by-convention wrapper around a C-contiguous
numpy array in the globally active precision (see `config`).  There is
deliberately no broadcasting and no view sharing: every operation checks
shapes explicitly, returns a fresh tensor, and never mutates its inputs,
so shape bugs surface at the call site instead of three layers later.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from . import config
from .errors import InvalidShapeError, NonFiniteError, ShapeMismatchError

_BINARY_OPS = {"add": np.add, "sub": np.subtract, "mul": np.multiply}


class Tensor:
    """Dense array of real values with explicit shape handling.

    Construction copies the given data into a fresh C-contiguous array of
    the active precision, rejects empty shapes / zero extents, and rejects
    NaN or infinite values, so any tensor in circulation is finite.
    """

    __slots__ = ("array",)

    def __init__(self, data):
        arr = np.array(data, dtype=config.dtype(), order="C")
        _check_shape(arr.shape)
        _check_finite(arr)
        self.array = arr

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        # Internal fast path: `arr` is a freshly allocated contiguous array
        # of the right dtype that no caller retains.  Skips the copy only.
        t = object.__new__(cls)
        _check_shape(arr.shape)
        _check_finite(arr)
        t.array = arr
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.array.shape

    @property
    def rank(self) -> int:
        return self.array.ndim

    @property
    def size(self) -> int:
        return self.array.size

    @property
    def data(self) -> np.ndarray:
        """Flat row-major view of the values (read-only)."""
        flat = self.array.reshape(-1)
        flat.flags.writeable = False
        return flat

    def tolist(self):
        return self.array.tolist()

    def copy(self) -> "Tensor":
        return Tensor._wrap(self.array.copy())

    def reshape(self, shape: Sequence[int]) -> "Tensor":
        shape = tuple(int(s) for s in shape)
        _check_shape(shape)
        if int(np.prod(shape)) != self.size:
            raise ShapeMismatchError(f"cannot reshape {self.shape} to {shape}")
        return Tensor._wrap(self.array.reshape(shape).copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.array.dtype})"


def _check_shape(shape: tuple[int, ...]) -> None:
    if len(shape) == 0:
        raise InvalidShapeError("tensor shape must have at least one extent")
    if any(s < 1 for s in shape):
        raise InvalidShapeError(f"all extents must be >= 1, got {shape}")


def _check_finite(arr: np.ndarray) -> None:
    if not np.isfinite(arr).all():
        raise NonFiniteError("tensor contains NaN or infinite values")


def create(shape: Iterable[int], fill: float) -> Tensor:
    """Tensor of the given shape with every element equal to `fill`."""
    shape = tuple(int(s) for s in shape)
    _check_shape(shape)
    return Tensor._wrap(np.full(shape, fill, dtype=config.dtype()))


def map_binary(a: Tensor, b: Tensor, op: str) -> Tensor:
    """Elementwise add / sub / mul of two same-shaped tensors."""
    if op not in _BINARY_OPS:
        raise ValueError(f"unknown op {op!r}; expected one of {sorted(_BINARY_OPS)}")
    if a.shape != b.shape:
        raise ShapeMismatchError(f"operand shapes differ: {a.shape} vs {b.shape}")
    return Tensor._wrap(_BINARY_OPS[op](a.array, b.array))


def add(a: Tensor, b: Tensor) -> Tensor:
    return map_binary(a, b, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    return map_binary(a, b, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    return map_binary(a, b, "mul")


def scale(a: Tensor, s: float) -> Tensor:
    """Every element multiplied by the scalar `s`."""
    return Tensor._wrap(a.array * config.dtype()(s))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Standard matrix product of two rank-2 tensors."""
    if a.rank != 2 or b.rank != 2:
        raise ShapeMismatchError(f"matmul needs rank-2 operands, got ranks {a.rank} and {b.rank}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"inner extents differ: {a.shape} x {b.shape}")
    return Tensor._wrap(np.matmul(a.array, b.array))
