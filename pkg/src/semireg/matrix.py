"""Dense 2-D float64 matrices: the single numeric container used everywhere.

A Matrix wraps a read-only, C-contiguous (row-major) float64 ndarray.
Construction validates shape and, by default, finiteness; instances are
immutable and safe to share across threads for reads.
"""

from __future__ import annotations

import numpy as np

from .errors import NonFiniteError, ShapeError


class Matrix:
    __slots__ = ("data",)

    def __init__(self, values, *, check_finite: bool = True):
        arr = np.array(values, dtype=np.float64, order="C", copy=True)
        if arr.ndim != 2:
            raise ShapeError(f"matrix must be 2-D, got shape {arr.shape}")
        if check_finite and not np.all(np.isfinite(arr)):
            raise NonFiniteError("matrix entries must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def _wrap(cls, arr: np.ndarray, *, check_finite: bool = False) -> "Matrix":
        # Internal fast path: takes ownership of arr without copying.
        if arr.dtype != np.float64 or arr.ndim != 2:
            arr = np.ascontiguousarray(arr, dtype=np.float64)
        if check_finite and not np.all(np.isfinite(arr)):
            raise NonFiniteError("matrix entries must be finite")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        obj = object.__new__(cls)
        object.__setattr__(obj, "data", arr)
        return obj

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "Matrix":
        return cls._wrap(np.zeros((rows, cols)))

    @classmethod
    def full(cls, rows: int, cols: int, value: float) -> "Matrix":
        return cls(np.full((rows, cols), value))

    @classmethod
    def identity(cls, n: int) -> "Matrix":
        return cls._wrap(np.eye(n))

    @classmethod
    def from_flat(cls, rows: int, cols: int, flat) -> "Matrix":
        arr = np.asarray(flat, dtype=np.float64)
        if arr.size != rows * cols:
            raise ShapeError(
                f"expected {rows * cols} values for a {rows}x{cols} matrix, got {arr.size}"
            )
        return cls(arr.reshape(rows, cols))

    def __setattr__(self, name, value):
        raise AttributeError("Matrix is immutable")

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def flat(self) -> list[float]:
        """Entries in row-major order."""
        return self.data.ravel().tolist()

    def tolist(self) -> list[list[float]]:
        return self.data.tolist()

    def __matmul__(self, other: "Matrix") -> "Matrix":
        return matmul(self, other)

    def __repr__(self) -> str:
        return f"Matrix({self.rows}x{self.cols})"


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Standard matrix product; raises ShapeError naming both shapes."""
    if a.cols != b.rows:
        raise ShapeError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return Matrix._wrap(a.data @ b.data)
