"""Hot loops of the dense oracles, with a numba path and a pure-numpy path.

The numba kernels are used when numba imports and ``SLIMTT_DISABLE_NUMBA`` is
unset (or ``0``).  Both paths accumulate every output entry in the same order,
so their results are bit-identical; the test suite checks this directly.
"""
from __future__ import annotations

import os

import numpy as np

__all__ = [
    "NUMBA_ENABLED",
    "backend",
    "matvec_ordered",
    "assemble_generator",
    "matvec_numpy",
    "matvec_numba",
    "generator_numpy",
    "generator_numba",
]

_DISABLED = os.environ.get("SLIMTT_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError("disabled by SLIMTT_DISABLE_NUMBA")
    from numba import njit

    NUMBA_ENABLED = True
except ImportError:
    NUMBA_ENABLED = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f


def backend() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"


# ---------------------------------------------------------------------------
# ordered matrix-vector product
# ---------------------------------------------------------------------------

def matvec_numpy(matrix: np.ndarray, vec: np.ndarray) -> np.ndarray:
    out = np.zeros(matrix.shape[0])
    for j in range(matrix.shape[1]):
        out += matrix[:, j] * vec[j]
    return out


def _matvec_loop(matrix, vec):
    m, n = matrix.shape
    out = np.zeros(m)
    for i in range(m):
        acc = 0.0
        for j in range(n):
            acc += matrix[i, j] * vec[j]
        out[i] = acc
    return out


matvec_numba = njit(cache=True)(_matvec_loop) if NUMBA_ENABLED else None


def matvec_ordered(matrix: np.ndarray, vec: np.ndarray) -> np.ndarray:
    matrix = np.ascontiguousarray(matrix, dtype=np.float64)
    vec = np.ascontiguousarray(vec, dtype=np.float64)
    if NUMBA_ENABLED:
        return matvec_numba(matrix, vec)
    return matvec_numpy(matrix, vec)


# ---------------------------------------------------------------------------
# elementwise master-equation generator
# ---------------------------------------------------------------------------
# Reactions are packed as flat arrays: reaction m acts on cells cell_a[m] and
# cell_b[m] (-1 for single-cell reactions) with shifts shift_a/shift_b and reads
# its propensity from table[m, x_a, x_b] (0-based states, x_b = 0 for SCRs).

def generator_numpy(modes, cell_a, cell_b, shift_a, shift_b, table):
    modes = np.asarray(modes, dtype=np.int64)
    n_states = int(np.prod(modes))
    strides = np.concatenate(([1], np.cumprod(modes)[:-1])).astype(np.int64)
    cols = np.arange(n_states, dtype=np.int64)
    states = (cols[:, None] // strides[None, :]) % modes[None, :]
    gen = np.zeros((n_states, n_states))
    for m in range(len(cell_a)):
        ca, cb = cell_a[m], cell_b[m]
        xa = states[:, ca]
        if cb < 0:
            prop = table[m, xa, 0]
            ta = xa + shift_a[m]
            valid = (ta >= 0) & (ta < modes[ca])
            target = cols + shift_a[m] * strides[ca]
            moved = shift_a[m] != 0
        else:
            xb = states[:, cb]
            prop = table[m, xa, xb]
            ta, tb = xa + shift_a[m], xb + shift_b[m]
            valid = (ta >= 0) & (ta < modes[ca]) & (tb >= 0) & (tb < modes[cb])
            target = cols + shift_a[m] * strides[ca] + shift_b[m] * strides[cb]
            moved = shift_a[m] != 0 or shift_b[m] != 0
        if not moved:
            continue
        sel = valid
        gen[target[sel], cols[sel]] += prop[sel]
        gen[cols, cols] += -prop
    return gen


def _generator_loop(modes, cell_a, cell_b, shift_a, shift_b, table):
    d = modes.shape[0]
    n_states = 1
    for i in range(d):
        n_states *= modes[i]
    strides = np.ones(d, dtype=np.int64)
    for i in range(1, d):
        strides[i] = strides[i - 1] * modes[i - 1]
    gen = np.zeros((n_states, n_states))
    for m in range(cell_a.shape[0]):
        ca = cell_a[m]
        cb = cell_b[m]
        sa = shift_a[m]
        sb = shift_b[m] if cb >= 0 else 0
        if sa == 0 and sb == 0:
            continue
        for col in range(n_states):
            xa = (col // strides[ca]) % modes[ca]
            if cb >= 0:
                xb = (col // strides[cb]) % modes[cb]
                prop = table[m, xa, xb]
                valid = 0 <= xa + sa < modes[ca] and 0 <= xb + sb < modes[cb]
                target = col + sa * strides[ca] + sb * strides[cb]
            else:
                prop = table[m, xa, 0]
                valid = 0 <= xa + sa < modes[ca]
                target = col + sa * strides[ca]
            if valid:
                gen[target, col] += prop
            gen[col, col] += -prop
    return gen


generator_numba = njit(cache=True)(_generator_loop) if NUMBA_ENABLED else None


def assemble_generator(modes, cell_a, cell_b, shift_a, shift_b, table) -> np.ndarray:
    """Matricized generator ``sum_m (G_m - I) diag(a_m)`` from packed reactions."""
    args = (
        np.asarray(modes, dtype=np.int64),
        np.asarray(cell_a, dtype=np.int64),
        np.asarray(cell_b, dtype=np.int64),
        np.asarray(shift_a, dtype=np.int64),
        np.asarray(shift_b, dtype=np.int64),
        np.ascontiguousarray(table, dtype=np.float64),
    )
    if NUMBA_ENABLED:
        return generator_numba(*args)
    return generator_numpy(*args)
