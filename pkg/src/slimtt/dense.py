"""Dense tensors and operators on a cell state space.

Every brute-force oracle in the package goes through this module.  States are
1-based tuples ``(x_1, ..., x_d)`` and flat storage uses the little-endian
multi-index, i.e. the first cell varies fastest.  For numpy arrays this is
exactly Fortran ordering, which is what all reshapes below rely on.

Operators store their entries over the interleaved index sequence
``(x_1, y_1, ..., x_d, y_d)``, so a ``DenseOperator`` is a ``DenseTensor`` on
the doubled shape ``(n_1, n_1, ..., n_d, n_d)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

from . import _kernels


@dataclass(frozen=True)
class Shape:
    """Per-cell mode sizes plus the cyclic flag of the interaction graph."""

    modes: tuple[int, ...]
    cyclic: bool = False

    def __init__(self, modes: Sequence[int], cyclic: bool = False):
        modes = tuple(int(n) for n in modes)
        if len(modes) < 1:
            raise ValueError("a shape needs at least one cell")
        if any(n < 1 for n in modes):
            raise ValueError(f"mode sizes must be positive, got {modes}")
        if cyclic and len(modes) < 3:
            raise ValueError("cyclic systems need at least 3 cells")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "cyclic", bool(cyclic))

    @property
    def d(self) -> int:
        return len(self.modes)

    @property
    def size(self) -> int:
        return int(np.prod(self.modes, dtype=np.int64))

    def doubled(self) -> "Shape":
        """Shape of the interleaved ``(x_1, y_1, ...)`` operator index."""
        return Shape([n for n in self.modes for _ in range(2)])


def multi_index(x: Sequence[int], modes: Sequence[int] | Shape) -> int:
    """Little-endian linear index ``1 + sum (x_i - 1) prod_{j<i} n_j``.

    Both the state and the result are 1-based.
    """
    if isinstance(modes, Shape):
        modes = modes.modes
    if len(x) != len(modes):
        raise ValueError(f"state has {len(x)} cells, shape has {len(modes)}")
    k, stride = 1, 1
    for i, (xi, n) in enumerate(zip(x, modes)):
        if not 1 <= xi <= n:
            raise IndexError(f"cell {i + 1}: state {xi} outside 1..{n}")
        k += (xi - 1) * stride
        stride *= n
    return k


def multi_index_inverse(k: int, modes: Sequence[int] | Shape) -> tuple[int, ...]:
    """Inverse of :func:`multi_index`."""
    if isinstance(modes, Shape):
        modes = modes.modes
    total = int(np.prod(modes, dtype=np.int64))
    if not 1 <= k <= total:
        raise IndexError(f"linear index {k} outside 1..{total}")
    k -= 1
    x = []
    for n in modes:
        k, r = divmod(k, n)
        x.append(r + 1)
    return tuple(x)


@dataclass(frozen=True, eq=False)
class DenseTensor:
    shape: Shape
    entries: np.ndarray

    def __post_init__(self):
        entries = np.ascontiguousarray(self.entries, dtype=np.float64).ravel()
        if entries.size != self.shape.size:
            raise ValueError(
                f"expected {self.shape.size} entries for modes {self.shape.modes}, "
                f"got {entries.size}"
            )
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_array(cls, array, cyclic: bool = False) -> "DenseTensor":
        array = np.asarray(array, dtype=np.float64)
        return cls(Shape(array.shape, cyclic), array.ravel(order="F"))

    @property
    def array(self) -> np.ndarray:
        """View with one numpy axis per cell (0-based indices)."""
        return self.entries.reshape(self.shape.modes, order="F")

    def __getitem__(self, x: Sequence[int]) -> float:
        return float(self.entries[multi_index(x, self.shape) - 1])


@dataclass(frozen=True, eq=False)
class DenseOperator:
    shape: Shape
    entries: np.ndarray

    def __post_init__(self):
        entries = np.ascontiguousarray(self.entries, dtype=np.float64).ravel()
        expected = self.shape.size**2
        if entries.size != expected:
            raise ValueError(f"expected {expected} operator entries, got {entries.size}")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_matrix(cls, matrix, shape: Shape) -> "DenseOperator":
        """Build from the matricized form ``M[phi(x) - 1, phi(y) - 1]``."""
        matrix = np.asarray(matrix, dtype=np.float64)
        d, modes = shape.d, shape.modes
        arr = matrix.reshape(modes + modes, order="F")
        # (x_1..x_d, y_1..y_d) -> (x_1, y_1, ..., x_d, y_d)
        perm = [ax for i in range(d) for ax in (i, d + i)]
        return cls(shape, arr.transpose(perm).ravel(order="F"))

    @property
    def array(self) -> np.ndarray:
        """Interleaved view with axes ``(x_1, y_1, ..., x_d, y_d)``."""
        return self.entries.reshape(self.shape.doubled().modes, order="F")

    def matrix(self) -> np.ndarray:
        d, modes = self.shape.d, self.shape.modes
        perm = [2 * i for i in range(d)] + [2 * i + 1 for i in range(d)]
        n = self.shape.size
        return self.array.transpose(perm).reshape((n, n), order="F")

    def __getitem__(self, xy: tuple[Sequence[int], Sequence[int]]) -> float:
        x, y = xy
        return float(self.matrix()[multi_index(x, self.shape) - 1, multi_index(y, self.shape) - 1])


def tensor_product(a: DenseTensor, b: DenseTensor) -> DenseTensor:
    """``(a (x) b)[x, y] = a[x] * b[y]`` on the concatenated shape."""
    shape = Shape(a.shape.modes + b.shape.modes)
    # little-endian: a's index is the fast one, so a.entries varies along rows
    return DenseTensor(shape, np.outer(a.entries, b.entries).ravel(order="F"))


def frobenius_norm(t: DenseTensor | DenseOperator) -> float:
    return float(np.sqrt(np.dot(t.entries, t.entries)))


def dense_matvec(a: DenseOperator, t: DenseTensor) -> DenseTensor:
    """Apply ``a`` to ``t``, summing over ``y`` in ascending multi-index order."""
    if a.shape.modes != t.shape.modes:
        raise ValueError(f"operator modes {a.shape.modes} do not match tensor modes {t.shape.modes}")
    out = _kernels.matvec_ordered(a.matrix(), t.entries)
    return DenseTensor(t.shape, out)


def kron_cells(factors: Sequence[np.ndarray]) -> np.ndarray:
    """Matricized Kronecker product of per-cell factors (cell 1 first).

    Under little-endian linearization cell 1 is the fastest index, so the
    numpy Kronecker product runs over the factors in reverse order.
    """
    return reduce(np.kron, reversed([np.asarray(f, dtype=np.float64) for f in factors]))


def identity_operator(shape: Shape) -> DenseOperator:
    return DenseOperator.from_matrix(np.eye(shape.size), shape)
