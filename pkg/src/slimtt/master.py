"""Dense brute-force generators of the master equation and generator checks.

Two independent constructions are provided:

* :func:`dense_generator` works in tensor notation: for every reaction the
  multidimensional shift operator is the Kronecker product of per-cell shift
  matrices and the propensity is lifted to a diagonal over the full state space,
  then ``(G - I) diag(a)`` is accumulated.
* :func:`elementwise_generator` loops over source states and applies each
  reaction's net change directly (compiled kernel, see ``_kernels``).

Transitions leaving the truncated state space are dropped in both, while the
outflow term ``-a(Y)`` on the diagonal is kept.  Both accumulate every
entry in the same order, so they agree bit for bit.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .dense import DenseOperator
from .reactions import ReactionSystem
from .slim import shift_matrix

DEFAULT_STATE_CAP = 10**6


class StateCapError(ValueError):
    """Raised when a dense oracle would exceed the configured state count."""


def state_cap() -> int:
    value = os.environ.get("SLIMTT_STATE_CAP")
    return int(float(value)) if value else DEFAULT_STATE_CAP


def _check_cap(rs: ReactionSystem, cap: int | None):
    cap = state_cap() if cap is None else int(cap)
    size = rs.shape.size
    if size > cap:
        raise StateCapError(
            f"state space has {size} states, dense oracles are capped at {cap}; "
            "reduce d or n (or raise SLIMTT_STATE_CAP)"
        )


def _reaction_terms(rs: ReactionSystem):
    """Yield ``(cells, shifts, propensity)`` per reaction, SCRs first, then TCRs by edge."""
    for i, cell in enumerate(rs.scrs):
        for r in cell:
            yield (i,), (r.net_change,), r.propensity
    for e, edge in enumerate(rs.tcrs):
        i, j = rs.edge_cells(e)
        for r in edge:
            yield (i, j), r.net_changes, r.propensity


def _lift_propensity(modes, cells, prop) -> np.ndarray:
    """Propensity as a vector over all states (little-endian order)."""
    shape = [1] * len(modes)
    for c in cells:
        shape[c] = modes[c]
    if len(cells) == 2 and cells[0] > cells[1]:
        prop = prop.T  # closing edge: axes of ``prop`` are (cell d, cell 1)
    full = np.broadcast_to(prop.reshape(shape, order="F"), modes)
    return np.asarray(full).ravel(order="F")


def dense_generator(rs: ReactionSystem, cap: int | None = None) -> DenseOperator:
    """``A = sum_mu (G_mu - I) diag(a_mu)`` assembled from Kronecker shift operators."""
    _check_cap(rs, cap)
    modes = rs.shape.modes
    size = rs.shape.size
    gen = np.zeros((size, size))
    for cells, shifts, prop in _reaction_terms(rs):
        factors = [sp.identity(n, format="csr") for n in modes]
        for c, s in zip(cells, shifts):
            factors[c] = sp.csr_matrix(shift_matrix(modes[c], -s))
        # cell 1 is the fastest index, so the Kronecker product runs backwards
        shift_op = factors[-1]
        for f in reversed(factors[:-1]):
            shift_op = sp.kron(shift_op, f, format="csr")
        a = _lift_propensity(modes, cells, prop)
        diag_a = sp.diags(a, format="csr")
        term = (shift_op @ diag_a - diag_a).tocoo()
        term.sum_duplicates()
        gen[term.row, term.col] += term.data
    return DenseOperator.from_matrix(gen, rs.shape)


def pack_reactions(rs: ReactionSystem):
    """Flat arrays describing every reaction, in the order of :func:`dense_generator`."""
    modes = rs.shape.modes
    nmax = max(modes)
    terms = list(_reaction_terms(rs))
    m = len(terms)
    cell_a = np.full(m, -1, dtype=np.int64)
    cell_b = np.full(m, -1, dtype=np.int64)
    shift_a = np.zeros(m, dtype=np.int64)
    shift_b = np.zeros(m, dtype=np.int64)
    table = np.zeros((m, nmax, nmax))
    for k, (cells, shifts, prop) in enumerate(terms):
        cell_a[k], shift_a[k] = cells[0], shifts[0]
        if len(cells) == 2:
            cell_b[k], shift_b[k] = cells[1], shifts[1]
            table[k, : prop.shape[0], : prop.shape[1]] = prop
        else:
            table[k, : prop.shape[0], 0] = prop
    return np.asarray(modes, dtype=np.int64), cell_a, cell_b, shift_a, shift_b, table


def elementwise_generator(rs: ReactionSystem, cap: int | None = None) -> DenseOperator:
    """Generator built state by state: ``A[Y + xi, Y] += a(Y)`` and ``A[Y, Y] -= a(Y)``."""
    _check_cap(rs, cap)
    if rs.shape.size == 0:
        return DenseOperator.from_matrix(np.zeros((0, 0)), rs.shape)
    gen = _kernels.assemble_generator(*pack_reactions(rs))
    return DenseOperator.from_matrix(gen, rs.shape)


@dataclass
class GeneratorReport:
    offdiag_nonnegative: bool
    min_offdiag: float
    column_sums: np.ndarray
    leak: float
    conserving: bool
    leaking_states: int

    def summary(self) -> str:
        return (
            f"off-diagonal >= 0: {self.offdiag_nonnegative} (min {self.min_offdiag:.3g}); "
            f"max |column sum| {self.leak:.3g}; conserving: {self.conserving} "
            f"({self.leaking_states} leaking states)"
        )


def verify_generator(a: DenseOperator, rtol: float = 1e-12) -> GeneratorReport:
    """Check the CTMC generator properties of a dense operator.

    A column counts as conserving when its sum is at most ``rtol`` times the
    column's absolute mass (or ``rtol`` itself for tiny columns), which absorbs
    the rounding of rates that span many orders of magnitude.
    """
    mat = a.matrix()
    off = mat - np.diag(np.diag(mat))
    min_off = float(off.min()) if off.size else 0.0
    sums = mat.sum(axis=0)
    scale = np.maximum(np.abs(mat).sum(axis=0), 1.0)
    leaking = np.abs(sums) > rtol * scale
    return GeneratorReport(
        offdiag_nonnegative=bool(min_off >= 0.0),
        min_offdiag=min_off,
        column_sums=sums,
        leak=float(np.max(np.abs(sums))) if sums.size else 0.0,
        conserving=not bool(np.any(leaking)),
        leaking_states=int(np.sum(leaking)),
    )
