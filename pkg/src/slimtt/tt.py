"""Tensor trains: tensors with order-3 cores, operators with order-4 cores.

Core layout
-----------
* tensor core ``i`` has shape ``(r_{i-1}, n_i, r_i)``
* operator core ``i`` has shape ``(r_{i-1}, n_i, n_i, r_i)`` with the row
  index ``x_i`` before the column index ``y_i``

Every function here is pure.  Rounding is never implicit: sums and products
grow ranks and the caller decides when to call :func:`tt_truncate`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dense import DenseOperator, DenseTensor, Shape, kron_cells

__all__ = [
    "TtTensor",
    "TtOperator",
    "CanonicalTensor",
    "CanonicalOperator",
    "tt_to_full",
    "tt_op_to_full",
    "canonical_to_full",
    "canonical_to_tt",
    "tt_add",
    "tt_scale",
    "tt_matvec",
    "tt_op_matmul",
    "tt_op_transpose",
    "tt_identity",
    "tt_ones",
    "tt_zeros",
    "tt_from_dense",
    "rank_transpose",
    "orthogonalize",
    "tt_truncate",
    "tt_norm",
    "tt_dot",
]


def _check_chain(cores, order):
    if len(cores) == 0:
        raise ValueError("a tensor train needs at least one core")
    for i, c in enumerate(cores):
        if c.ndim != order:
            raise ValueError(f"core {i} has order {c.ndim}, expected {order}")
    if cores[0].shape[0] != 1 or cores[-1].shape[-1] != 1:
        raise ValueError("boundary ranks must be 1")
    for i in range(len(cores) - 1):
        if cores[i].shape[-1] != cores[i + 1].shape[0]:
            raise ValueError(
                f"rank mismatch between cores {i} and {i + 1}: "
                f"{cores[i].shape[-1]} != {cores[i + 1].shape[0]}"
            )


@dataclass(frozen=True, eq=False)
class TtTensor:
    cores: tuple
    cyclic: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        cores = tuple(np.asarray(c, dtype=np.float64) for c in self.cores)
        _check_chain(cores, 3)
        object.__setattr__(self, "cores", cores)

    @property
    def d(self) -> int:
        return len(self.cores)

    @property
    def modes(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def ranks(self) -> tuple[int, ...]:
        return (1,) + tuple(c.shape[-1] for c in self.cores)

    @property
    def shape(self) -> Shape:
        return Shape(self.modes, self.cyclic and self.d >= 3)

    def with_cores(self, cores) -> "TtTensor":
        return TtTensor(tuple(cores), self.cyclic, dict(self.meta))


@dataclass(frozen=True, eq=False)
class TtOperator:
    cores: tuple
    cyclic: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        cores = tuple(np.asarray(c, dtype=np.float64) for c in self.cores)
        _check_chain(cores, 4)
        for i, c in enumerate(cores):
            if c.shape[1] != c.shape[2]:
                raise ValueError(f"operator core {i} is not square: {c.shape}")
        object.__setattr__(self, "cores", cores)

    @property
    def d(self) -> int:
        return len(self.cores)

    @property
    def modes(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def ranks(self) -> tuple[int, ...]:
        return (1,) + tuple(c.shape[-1] for c in self.cores)

    @property
    def shape(self) -> Shape:
        return Shape(self.modes, self.cyclic and self.d >= 3)

    def with_cores(self, cores) -> "TtOperator":
        return TtOperator(tuple(cores), self.cyclic, dict(self.meta))


@dataclass(frozen=True, eq=False)
class CanonicalTensor:
    """Sum of ``rank`` elementary products; core ``i`` has shape ``(rank, n_i)``."""

    cores: tuple

    def __post_init__(self):
        cores = tuple(np.asarray(c, dtype=np.float64) for c in self.cores)
        if not cores or any(c.ndim != 2 for c in cores):
            raise ValueError("canonical tensor cores must be (rank, n_i) arrays")
        if len({c.shape[0] for c in cores}) != 1 or cores[0].shape[0] < 1:
            raise ValueError("canonical cores must share a positive leading rank")
        object.__setattr__(self, "cores", cores)

    @property
    def rank(self) -> int:
        return self.cores[0].shape[0]


@dataclass(frozen=True, eq=False)
class CanonicalOperator:
    """Sum of ``rank`` Kronecker products; core ``i`` has shape ``(rank, n_i, n_i)``."""

    cores: tuple

    def __post_init__(self):
        cores = tuple(np.asarray(c, dtype=np.float64) for c in self.cores)
        if not cores or any(c.ndim != 3 or c.shape[1] != c.shape[2] for c in cores):
            raise ValueError("canonical operator cores must be (rank, n_i, n_i) arrays")
        if len({c.shape[0] for c in cores}) != 1 or cores[0].shape[0] < 1:
            raise ValueError("canonical cores must share a positive leading rank")
        object.__setattr__(self, "cores", cores)

    @property
    def rank(self) -> int:
        return self.cores[0].shape[0]


Tt = TtTensor | TtOperator


# ---------------------------------------------------------------------------
# conversion
# ---------------------------------------------------------------------------

def _contract_chain(cores) -> np.ndarray:
    out = cores[0]
    for c in cores[1:]:
        out = np.tensordot(out, c, axes=([-1], [0]))
    return out[0, ..., 0]


def tt_to_full(t: TtTensor) -> DenseTensor:
    return DenseTensor.from_array(_contract_chain(t.cores), cyclic=t.shape.cyclic)


def tt_op_to_full(a: TtOperator) -> DenseOperator:
    # chained contraction yields the interleaved (x1, y1, x2, y2, ...) axes directly
    arr = _contract_chain(a.cores)
    return DenseOperator(a.shape, arr.ravel(order="F"))


def tt_from_dense(t: DenseTensor) -> TtTensor:
    """TT-SVD of a dense tensor, dropping only numerically zero singular values."""
    modes = t.shape.modes
    rest = t.array
    cores = []
    r = 1
    for n in modes[:-1]:
        mat = rest.reshape(r * n, -1, order="F")
        u, s, vt = np.linalg.svd(mat, full_matrices=False)
        keep = max(1, int(np.sum(s > 1e-14 * (s[0] if s.size else 0.0))))
        cores.append(u[:, :keep].reshape(r, n, keep, order="F"))
        rest = s[:keep, None] * vt[:keep]
        r = keep
    cores.append(rest.reshape(r, modes[-1], 1, order="F"))
    return TtTensor(tuple(cores), t.shape.cyclic)


def canonical_to_full(c: CanonicalTensor | CanonicalOperator):
    """Term-by-term dense evaluation of a canonical decomposition."""
    if isinstance(c, CanonicalTensor):
        shape = Shape([core.shape[1] for core in c.cores])
        total = np.zeros(shape.size)
        for k in range(c.rank):
            total += kron_cells([core[k][:, None] for core in c.cores]).ravel()
        return DenseTensor(shape, total)
    shape = Shape([core.shape[1] for core in c.cores])
    total = np.zeros((shape.size, shape.size))
    for k in range(c.rank):
        total += kron_cells([core[k] for core in c.cores])
    return DenseOperator.from_matrix(total, shape)


def canonical_to_tt(c: CanonicalTensor | CanonicalOperator) -> TtTensor | TtOperator:
    """TT form with every interior rank equal to the canonical rank.

    The first core holds the canonical first core, interior cores are diagonal
    in the rank indices and the last core closes the sum.
    """
    r = c.rank
    d = len(c.cores)
    operator = isinstance(c, CanonicalOperator)
    # move the rank axis last: (n, r) or (n, n, r)
    slabs = [np.moveaxis(core, 0, -1) for core in c.cores]
    if d == 1:
        core = slabs[0].sum(axis=-1)[None, ..., None]
        return TtOperator((core,)) if operator else TtTensor((core,))
    cores = [slabs[0][None]]
    for slab in slabs[1:-1]:
        core = np.zeros((r,) + slab.shape[:-1] + (r,))
        for k in range(r):
            core[k, ..., k] = slab[..., k]
        cores.append(core)
    cores.append(np.moveaxis(slabs[-1], -1, 0)[..., None])
    return TtOperator(tuple(cores)) if operator else TtTensor(tuple(cores))


# ---------------------------------------------------------------------------
# arithmetic
# ---------------------------------------------------------------------------

def _same_kind(a, b):
    if type(a) is not type(b):
        raise TypeError(f"cannot combine {type(a).__name__} with {type(b).__name__}")
    if a.modes != b.modes:
        raise ValueError(f"mode mismatch: {a.modes} vs {b.modes}")


def tt_add(a: Tt, b: Tt) -> Tt:
    """Block-diagonal TT sum; interior ranks add up, nothing is rounded."""
    _same_kind(a, b)
    d = a.d
    if d == 1:
        return a.with_cores([a.cores[0] + b.cores[0]])
    cores = [np.concatenate([a.cores[0], b.cores[0]], axis=-1)]
    for ca, cb in zip(a.cores[1:-1], b.cores[1:-1]):
        ra, rb = ca.shape[0], cb.shape[0]
        sa, sb = ca.shape[-1], cb.shape[-1]
        core = np.zeros((ra + rb,) + ca.shape[1:-1] + (sa + sb,))
        core[:ra, ..., :sa] = ca
        core[ra:, ..., sa:] = cb
        cores.append(core)
    cores.append(np.concatenate([a.cores[-1], b.cores[-1]], axis=0))
    return a.with_cores(cores)


def tt_scale(t: Tt, alpha: float) -> Tt:
    cores = list(t.cores)
    cores[0] = cores[0] * float(alpha)
    return t.with_cores(cores)


def tt_matvec(a: TtOperator, t: TtTensor) -> TtTensor:
    if a.modes != t.modes:
        raise ValueError(f"operator modes {a.modes} do not match tensor modes {t.modes}")
    cores = []
    for ca, ct in zip(a.cores, t.cores):
        ra, n, _, sa = ca.shape
        rt, _, st = ct.shape
        core = np.einsum("axyb,tyc->atxbc", ca, ct).reshape(ra * rt, n, sa * st)
        cores.append(core)
    return TtTensor(tuple(cores), t.cyclic, dict(t.meta))


def tt_op_matmul(a: TtOperator, b: TtOperator) -> TtOperator:
    """Operator product ``a @ b``."""
    _same_kind(a, b)
    cores = []
    for ca, cb in zip(a.cores, b.cores):
        ra, n, _, sa = ca.shape
        rb, _, _, sb = cb.shape
        core = np.einsum("axyb,cyzd->acxzbd", ca, cb).reshape(ra * rb, n, n, sa * sb)
        cores.append(core)
    return TtOperator(tuple(cores), a.cyclic)


def tt_op_transpose(a: TtOperator) -> TtOperator:
    return a.with_cores([c.transpose(0, 2, 1, 3) for c in a.cores])


def tt_identity(modes: Sequence[int]) -> TtOperator:
    return TtOperator(tuple(np.eye(n)[None, :, :, None] for n in modes))


def tt_ones(modes: Sequence[int]) -> TtTensor:
    return TtTensor(tuple(np.ones((1, n, 1)) for n in modes))


def tt_zeros(modes: Sequence[int], operator: bool = False) -> Tt:
    if operator:
        return TtOperator(tuple(np.zeros((1, n, n, 1)) for n in modes))
    return TtTensor(tuple(np.zeros((1, n, 1)) for n in modes))


def rank_transpose(core: np.ndarray) -> np.ndarray:
    """Swap the leading and trailing rank axes; inner slices stay as they are."""
    return np.swapaxes(np.asarray(core), 0, -1)


# ---------------------------------------------------------------------------
# orthogonalization, rounding, norms
# ---------------------------------------------------------------------------

def _as_order3(t: Tt):
    if isinstance(t, TtOperator):
        return [c.reshape(c.shape[0], -1, c.shape[-1]) for c in t.cores]
    return list(t.cores)


def _from_order3(t: Tt, cores):
    if isinstance(t, TtOperator):
        return t.with_cores(
            [c.reshape(c.shape[0], n, n, c.shape[-1]) for c, n in zip(cores, t.modes)]
        )
    return t.with_cores(cores)


def _left_orth(cores, stop):
    """QR sweep making cores ``0..stop-1`` left-orthonormal."""
    cores = list(cores)
    for k in range(stop):
        r, n, s = cores[k].shape
        q, rr = np.linalg.qr(cores[k].reshape(r * n, s))
        cores[k] = q.reshape(r, n, q.shape[1])
        cores[k + 1] = np.tensordot(rr, cores[k + 1], axes=([1], [0]))
    return cores


def _right_orth(cores, stop):
    """LQ sweep making cores ``stop+1..d-1`` right-orthonormal."""
    cores = list(cores)
    for k in range(len(cores) - 1, stop, -1):
        r, n, s = cores[k].shape
        q, rr = np.linalg.qr(cores[k].reshape(r, n * s).T)
        cores[k] = q.T.reshape(q.shape[1], n, s)
        cores[k - 1] = np.tensordot(cores[k - 1], rr.T, axes=([-1], [0]))
    return cores


def orthogonalize(t: Tt, direction: str = "left") -> Tt:
    """Orthonormalize all cores except the terminal one in ``direction``.

    ``"left"`` leaves the last core carrying the norm, ``"right"`` the first.
    """
    cores = _as_order3(t)
    if direction == "left":
        cores = _left_orth(cores, len(cores) - 1)
    elif direction == "right":
        cores = _right_orth(cores, 0)
    else:
        raise ValueError(f"direction must be 'left' or 'right', got {direction!r}")
    return _from_order3(t, cores)


def _truncation_rank(s: np.ndarray, epsilon: float, max_rank: int | None) -> int:
    if s.size == 0 or s[0] == 0.0:
        return 1
    if epsilon == 0.0:
        keep = int(np.sum(s > 1e-14 * s[0]))
    else:
        # tail[g] = norm of s[g:]
        tail = np.sqrt(np.cumsum((s**2)[::-1]))[::-1]
        bound = epsilon * tail[0]
        keep = s.size
        for g in range(1, s.size):
            if tail[g] <= bound:
                keep = g
                break
    if max_rank is not None:
        keep = min(keep, int(max_rank))
    return max(1, keep)


def tt_truncate(t: Tt, epsilon: float = 0.0, max_rank: int | None = None) -> Tt:
    """TT rounding with a per-bond relative tail threshold ``epsilon``.

    The overall relative error is at most ``epsilon * sqrt(d - 1)``.  With
    ``epsilon = 0`` only singular values below ``1e-14`` relative are removed.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    cores = _right_orth(_as_order3(t), 0)
    for k in range(len(cores) - 1):
        r, n, s = cores[k].shape
        u, sv, vt = np.linalg.svd(cores[k].reshape(r * n, s), full_matrices=False)
        g = _truncation_rank(sv, epsilon, max_rank)
        cores[k] = u[:, :g].reshape(r, n, g)
        carry = sv[:g, None] * vt[:g]
        cores[k + 1] = np.tensordot(carry, cores[k + 1], axes=([1], [0]))
    return _from_order3(t, cores)


def tt_dot(a: Tt, b: Tt) -> float:
    _same_kind(a, b)
    env = np.ones((1, 1))
    for ca, cb in zip(_as_order3(a), _as_order3(b)):
        env = np.einsum("ab,anc,bnd->cd", env, ca, cb)
    return float(env[0, 0])


def tt_norm(t: Tt) -> float:
    cores = _left_orth(_as_order3(t), t.d - 1)
    last = cores[-1]
    return float(np.sqrt(np.sum(last * last)))
