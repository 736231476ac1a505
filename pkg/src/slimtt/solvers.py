"""Time propagation of TT master equations.

The workhorse is a fixed-rank alternating linear scheme (ALS): with all cores
but one frozen and orthonormal, the linear system reduces to a small dense
problem for the free core.  :func:`implicit_euler` chains one ALS solve per
time step, warm-starting from the previous state.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .dense import DenseOperator, DenseTensor
from .tt import (
    TtOperator,
    TtTensor,
    orthogonalize,
    tt_add,
    tt_identity,
    tt_matvec,
    tt_norm,
    tt_ones,
    tt_dot,
    tt_scale,
    tt_truncate,
)


class AlsError(RuntimeError):
    """Local system could not be solved."""

    def __init__(self, message, core=None, step=None):
        super().__init__(message)
        self.core = core
        self.step = step


@dataclass(frozen=True)
class AlsConfig:
    """Knobs of :func:`als_solve`.

    ``ranks`` is either one bond rank for all bonds or a list of ``d - 1``.
    ``mode="galerkin"`` projects ``A`` onto the frozen interfaces;
    ``mode="residual"`` does the same for the normal equations ``A^T A x = A^T b``
    and therefore minimizes the residual (at squared condition number cost).
    """

    ranks: int | tuple = 10
    max_sweeps: int = 8
    tol: float = 1e-10
    lam: float = 0.0
    seed: int = 0
    mode: str = "galerkin"

    def __post_init__(self):
        ranks = (self.ranks,) if np.isscalar(self.ranks) else tuple(self.ranks)
        if any(int(r) < 1 for r in ranks):
            raise ValueError("ALS ranks must be >= 1")
        if self.max_sweeps < 1:
            raise ValueError("ALS needs at least one sweep")
        if self.lam < 0:
            raise ValueError("regularization must be non-negative")
        if self.mode not in ("galerkin", "residual"):
            raise ValueError(f"unknown ALS mode {self.mode!r}")

    def bond_ranks(self, modes: Sequence[int]) -> list[int]:
        d = len(modes)
        if np.isscalar(self.ranks):
            wanted = [int(self.ranks)] * (d - 1)
        else:
            wanted = [int(r) for r in self.ranks]
            if len(wanted) != d - 1:
                raise ValueError(f"expected {d - 1} bond ranks, got {len(wanted)}")
        out = []
        for k in range(d - 1):
            left = int(np.prod(modes[: k + 1]))
            right = int(np.prod(modes[k + 1 :]))
            out.append(min(wanted[k], left, right))
        return out


@dataclass
class AlsResult:
    solution: TtTensor
    residual: float
    sweeps: int
    history: list = field(default_factory=list)


def relative_residual(a: TtOperator, x: TtTensor, b: TtTensor) -> float:
    """``||A x - b|| / ||b||`` evaluated in TT arithmetic."""
    diff = tt_add(tt_matvec(a, x), tt_scale(b, -1.0))
    nb = tt_norm(b)
    return tt_norm(diff) / nb if nb > 0 else tt_norm(diff)


def _pad_guess(t: TtTensor, ranks: list[int], rng) -> TtTensor:
    """Resize ``t`` to the target bond ranks, filling new slots with noise."""
    t = tt_truncate(t, 0.0)
    if any(r > R for r, R in zip(t.ranks[1:-1], ranks)):
        t = tt_truncate(t, 0.0, max_rank=max(ranks))
    full = [1] + list(ranks) + [1]
    cores = []
    for k, c in enumerate(t.cores):
        r0, n, r1 = c.shape
        new = rng.standard_normal((full[k], n, full[k + 1]))
        scale = np.linalg.norm(c) / np.sqrt(c.size) if np.any(c) else 1.0
        new *= 1e-2 * scale
        r0, r1 = min(r0, full[k]), min(r1, full[k + 1])
        new[:r0, :, :r1] = c[:r0, :, :r1]
        cores.append(new)
    return TtTensor(tuple(cores), t.cyclic)


def _normal_system(a: TtOperator, b: TtTensor):
    at = a.with_cores([c.transpose(0, 2, 1, 3) for c in a.cores])
    cores = []
    for ct, ca in zip(at.cores, a.cores):
        r0, n, _, r1 = ct.shape
        s0, _, _, s1 = ca.shape
        cores.append(np.einsum("axyb,cyzd->acxzbd", ct, ca).reshape(r0 * s0, n, n, r1 * s1))
    return TtOperator(tuple(cores)), tt_matvec(at, b)


def als_solve(a: TtOperator, rhs: TtTensor, cfg: AlsConfig = AlsConfig(), x0: TtTensor | None = None) -> AlsResult:
    """Fixed-rank ALS for ``A x = rhs``.

    Parameters
    ----------
    a : TtOperator
    rhs : TtTensor
    cfg : AlsConfig
    x0 : TtTensor, optional
        Initial guess; defaults to ``rhs``.  It is padded (with seeded noise)
        or truncated to the configured ranks and right-orthogonalized.

    Returns
    -------
    AlsResult
        Solution, final relative residual ``||A x - rhs|| / ||rhs||``,
        number of sweeps and the residual after each sweep.
    """
    if a.modes != rhs.modes:
        raise ValueError(f"operator modes {a.modes} do not match right-hand side {rhs.modes}")
    if tt_norm(rhs) == 0.0:
        raise ValueError("right-hand side is zero")
    d = a.d
    rng = np.random.default_rng(cfg.seed)
    ranks = cfg.bond_ranks(a.modes)
    x = _pad_guess(rhs if x0 is None else x0, ranks, rng)
    x = orthogonalize(x, "right")
    op, b = (a, rhs) if cfg.mode == "galerkin" else _normal_system(a, rhs)

    xc = list(x.cores)
    A, B = op.cores, b.cores
    # phi_l[k] / f_l[k] contract cores 0..k-1, phi_r[k] / f_r[k] cores k..d-1
    phi_l = [None] * (d + 1)
    phi_r = [None] * (d + 1)
    f_l = [None] * (d + 1)
    f_r = [None] * (d + 1)
    phi_l[0] = np.ones((1, 1, 1))
    phi_r[d] = np.ones((1, 1, 1))
    f_l[0] = np.ones((1, 1))
    f_r[d] = np.ones((1, 1))
    for k in range(d - 1, 0, -1):
        phi_r[k] = _right_env(phi_r[k + 1], xc[k], A[k])
        f_r[k] = np.einsum("ixj,kxl,jl->ik", xc[k], B[k], f_r[k + 1])

    def solve_core(k):
        left, right = phi_l[k], phi_r[k + 1]
        r0, n, r1 = xc[k].shape
        # local[(p,i,q),(b,j,d)] = sum left[p,a,b] A[a,i,j,c] right[q,c,d]
        local = np.tensordot(left, A[k], axes=([1], [0]))  # p b i j c
        local = np.tensordot(local, right, axes=([4], [1]))  # p b i j q d
        local = local.transpose(0, 2, 4, 1, 3, 5).reshape(r0 * n * r1, r0 * n * r1)
        rhs_loc = np.tensordot(np.tensordot(f_l[k], B[k], axes=([1], [0])), f_r[k + 1], axes=([2], [1]))
        rhs_loc = rhs_loc.reshape(-1)
        if cfg.lam > 0:
            local = local + cfg.lam * np.eye(local.shape[0])
        try:
            sol = np.linalg.solve(local, rhs_loc)
        except np.linalg.LinAlgError as exc:
            raise AlsError(f"singular local system at core {k + 1}: {exc}", core=k + 1) from exc
        if not np.all(np.isfinite(sol)):
            raise AlsError(f"non-finite local solution at core {k + 1}", core=k + 1)
        xc[k] = sol.reshape(r0, n, r1)

    history = []
    sweeps = 0
    res = np.inf
    for sweep in range(cfg.max_sweeps):
        for k in range(d):
            solve_core(k)
            if k < d - 1:
                r0, n, r1 = xc[k].shape
                q, r = np.linalg.qr(xc[k].reshape(r0 * n, r1))
                xc[k] = q.reshape(r0, n, q.shape[1])
                xc[k + 1] = np.tensordot(r, xc[k + 1], axes=([1], [0]))
                phi_l[k + 1] = _left_env(phi_l[k], xc[k], A[k])
                f_l[k + 1] = np.einsum("ik,ixj,kxl->jl", f_l[k], xc[k], B[k])
        for k in range(d - 1, 0, -1):
            r0, n, r1 = xc[k].shape
            q, r = np.linalg.qr(xc[k].reshape(r0, n * r1).T)
            xc[k] = q.T.reshape(q.shape[1], n, r1)
            xc[k - 1] = np.tensordot(xc[k - 1], r.T, axes=([-1], [0]))
            phi_r[k] = _right_env(phi_r[k + 1], xc[k], A[k])
            f_r[k] = np.einsum("ixj,kxl,jl->ik", xc[k], B[k], f_r[k + 1])
            solve_core(k - 1)
        sweeps = sweep + 1
        new_res = relative_residual(a, TtTensor(tuple(xc), rhs.cyclic), rhs)
        history.append(new_res)
        converged = new_res <= cfg.tol or abs(res - new_res) < cfg.tol
        res = new_res
        if converged:
            break
    return AlsResult(TtTensor(tuple(xc), rhs.cyclic), float(res), sweeps, history)


def _left_env(env, xk, ak):
    # new[c, d, e] = sum env[p, a, b] x[p, i, c] A[a, i, j, d] x[b, j, e]
    t = np.tensordot(env, xk, axes=([0], [0]))  # a b i c
    t = np.tensordot(t, ak, axes=([0, 2], [0, 1]))  # b c j d
    return np.tensordot(t, xk, axes=([0, 2], [0, 1]))  # c d e


def _right_env(env, xk, ak):
    # new[p, a, b] = sum x[p, i, c] A[a, i, j, d] x[b, j, e] env[c, d, e]
    t = np.tensordot(xk, env, axes=([2], [0]))  # p i d e
    t = np.tensordot(t, ak, axes=([1, 2], [1, 3]))  # p e a j
    return np.tensordot(t, xk, axes=([1, 3], [2, 1]))  # p a b


# ---------------------------------------------------------------------------
# implicit Euler
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PropagationConfig:
    tau: float
    steps: int
    initial: TtTensor

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("step size must be positive")
        if self.steps < 1:
            raise ValueError("need at least one step")


@dataclass
class Trajectory:
    times: list
    states: list
    eps: list
    als: list

    @property
    def final(self) -> TtTensor:
        return self.states[-1]


def euler_operator(a: TtOperator, tau: float) -> TtOperator:
    """``I - tau A`` without rounding (one extra rank)."""
    return tt_add(tt_identity(a.modes), tt_scale(a, -tau))


def implicit_euler(a: TtOperator, cfg: PropagationConfig, als: AlsConfig = AlsConfig(), callback=None) -> Trajectory:
    """Solve ``(I - tau A) T_{k+1} = T_k`` for ``k = 0..K-1``.

    ``eps[k-1]`` is the relative residual of step ``k``, computed from the
    returned ``T_k`` with the same norm as the ALS report.
    """
    system = euler_operator(a, cfg.tau)
    current = cfg.initial
    traj = Trajectory([0.0], [current], [], [])
    for k in range(1, cfg.steps + 1):
        try:
            result = als_solve(system, current, als, x0=current)
        except AlsError as exc:
            exc.step = k
            raise AlsError(f"step {k}: {exc}", core=exc.core, step=k) from exc
        eps = relative_residual(system, result.solution, current)
        current = result.solution
        traj.times.append(k * cfg.tau)
        traj.states.append(current)
        traj.eps.append(eps)
        traj.als.append(result)
        if callback is not None:
            callback(k, current, eps)
    return traj


# ---------------------------------------------------------------------------
# marginals, initial states, dense reference
# ---------------------------------------------------------------------------

def point_mass(modes: Sequence[int], state: Sequence[int]) -> TtTensor:
    """Rank-1 TT with a single unit entry at the 1-based ``state``."""
    cores = []
    for n, x in zip(modes, state):
        if not 1 <= x <= n:
            raise IndexError(f"state {x} outside 1..{n}")
        v = np.zeros((1, n, 1))
        v[0, x - 1, 0] = 1.0
        cores.append(v)
    return TtTensor(tuple(cores))


def total_mass(t: TtTensor) -> float:
    return tt_dot(t, tt_ones(t.modes))


def marginals(t: TtTensor) -> list[np.ndarray]:
    """Per-cell marginal vectors, contracting every other core with ones."""
    d = t.d
    left = [np.ones(1)]
    for c in t.cores[:-1]:
        left.append(left[-1] @ c.sum(axis=1))
    right = [np.ones(1)]
    for c in reversed(t.cores[1:]):
        right.append(c.sum(axis=1) @ right[-1])
    right = right[::-1]
    return [np.einsum("a,aib,b->i", left[i], t.cores[i], right[i]) for i in range(d)]


def dense_trajectory(a: DenseOperator, p0: DenseTensor, times: Sequence[float]) -> list[DenseTensor]:
    """Exact ``exp(t A) p0`` at the requested times (Al-Mohy/Higham action)."""
    mat = sp.csr_matrix(a.matrix())
    times = np.asarray(times, dtype=float)
    out = []
    for t in times:
        out.append(DenseTensor(p0.shape, expm_multiply(t * mat, p0.entries)))
    return out


def dense_euler_step(a: DenseOperator, b: DenseTensor, tau: float) -> DenseTensor:
    mat = np.eye(a.shape.size) - tau * a.matrix()
    return DenseTensor(b.shape, np.linalg.solve(mat, b.entries))


def write_trajectory_csv(path, traj: Trajectory) -> Path:
    """One row per step: step, time, eps, mass, then all marginals flattened."""
    path = Path(path)
    rows = []
    modes = traj.states[0].modes
    header = ["step", "time", "eps", "mass"] + [
        f"m{i + 1}_{x + 1}" for i, n in enumerate(modes) for x in range(n)
    ]
    for k, (t, state) in enumerate(zip(traj.times, traj.states)):
        eps = traj.eps[k - 1] if k > 0 else 0.0
        margs = np.concatenate(marginals(state))
        rows.append([str(k)] + ["%.17g" % v for v in (t, eps, total_mass(state))] + ["%.17g" % v for v in margs])
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path
