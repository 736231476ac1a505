"""SLIM tensor-train layouts for nearest-neighbor interaction systems.

A system on cells ``1..d`` is described per cell by a single-cell block ``S_i``
and, per edge ``(i, i+1)``, a list of left factors ``L_i`` paired one-to-one
with a list of right factors ``M_{i+1}``.  On a ring the closing edge
``(d, 1)`` contributes ``L_d`` (on cell ``d``) and ``M_1`` (on cell 1).  The
represented operator is

    sum_i  I x .. x S_i x .. x I
  + sum_i  sum_mu  I x .. x L_{i,mu} x M_{i+1,mu} x .. x I
  + sum_mu M_{1,mu} x I x .. x I x L_{d,mu}          (rings only)

and the TT cores are the block supercores

    first     [S_1  L_1  I  M_1]
    interior  [[I, 0, 0, 0], [M_i, 0, 0, 0], [S_i, L_i, I, 0], [0, 0, 0, J]]
    last      [I; M_d; S_d; L_d]

with ``J`` the identity replicated ``len(L_d)`` times.  Chains drop the last
block row/column.  Bond ``i`` therefore has rank ``2 + len(L_i) + len(L_d)``.

The same layout builds tensors when every block is a vector and ``I`` is the
all-ones vector.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .reactions import ReactionSystem
from .tt import TtOperator, TtTensor

__all__ = [
    "SVD_TOL",
    "shift_matrix",
    "SlimBlocks",
    "slim_layout",
    "build_slim_general",
    "equilibrated_svd",
    "rank_factorization",
    "compress_pair",
    "markov_blocks",
    "build_slim_markov",
    "storage_count",
    "storage_census",
]

SVD_TOL = 1e-12


def shift_matrix(n: int, k: int) -> np.ndarray:
    """``G(k)`` with ``G[x, y] = 1`` iff ``y - x = k``."""
    if n < 1:
        raise ValueError("shift matrix size must be positive")
    return np.eye(n, k=int(k))


@dataclass(frozen=True, eq=False)
class SlimBlocks:
    """Per-cell components of a SLIM layout.

    Parameters
    ----------
    S : list of arrays
        One single-cell block per cell.
    L : list of lists
        ``L[i]`` holds the left factors of edge ``(i, i+1)`` (0-based cells);
        ``L[d-1]`` belongs to the closing edge and must be empty on a chain.
    M : list of lists
        ``M[i]`` holds the right factors paired with ``L[i-1]``; ``M[0]`` pairs
        with the closing edge.
    mode : {"operator", "tensor"}
    cyclic : bool
    """

    S: list
    L: list
    M: list
    mode: str = "operator"
    cyclic: bool = False

    def __post_init__(self):
        if self.mode not in ("operator", "tensor"):
            raise ValueError(f"mode must be 'operator' or 'tensor', got {self.mode!r}")
        d = len(self.S)
        if d < 2:
            raise ValueError("SLIM layouts need at least 2 cells")
        if self.cyclic and d < 3:
            raise ValueError("cyclic systems need at least 3 cells")
        if len(self.L) != d or len(self.M) != d:
            raise ValueError(f"need S, L, M lists of length {d}")
        S = [np.asarray(s, dtype=np.float64) for s in self.S]
        L = [[np.asarray(b, dtype=np.float64) for b in blk] for blk in self.L]
        M = [[np.asarray(b, dtype=np.float64) for b in blk] for blk in self.M]
        if not self.cyclic and (L[-1] or M[0]):
            raise ValueError("a chain has no closing edge; L[d-1] and M[0] must be empty")
        for i in range(d):
            j = (i + 1) % d
            if len(L[i]) != len(M[j]):
                raise ValueError(
                    f"edge ({i + 1}, {j + 1}): {len(L[i])} left factors vs {len(M[j])} right factors"
                )
        ndim = 2 if self.mode == "operator" else 1
        for i, s in enumerate(S):
            n = s.shape[0]
            want = (n,) * ndim
            for blk in [s] + L[i] + M[i]:
                if blk.shape != want:
                    raise ValueError(f"cell {i + 1}: block of shape {blk.shape}, expected {want}")
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "M", M)

    @property
    def d(self) -> int:
        return len(self.S)

    @property
    def modes(self) -> tuple[int, ...]:
        return tuple(s.shape[0] for s in self.S)

    @property
    def betas(self) -> list[int]:
        """Coupling counts per edge; the closing edge is last on a ring."""
        d = self.d
        return [len(self.L[i]) for i in range(d if self.cyclic else d - 1)]


# ---------------------------------------------------------------------------
# layout
# ---------------------------------------------------------------------------

def slim_layout(betas, d: int, cyclic: bool) -> list[list[tuple[int, int, str, int]]]:
    """Block positions of every core as ``(row, col, role, item)`` tuples.

    ``role`` is one of ``S``, ``L``, ``M``, ``I``, ``J``; ``item`` indexes into
    the ``L``/``M`` list (or the replicated identity for ``J``).  Positions are
    rank indices of the core.
    """
    betas = list(betas)
    bc = betas[d - 1] if cyclic else 0
    b = betas[: d - 1]

    def idle(k):
        return 1 + b[k]

    def carry(k):
        return 2 + b[k]

    layout = []
    first = [(0, 0, "S", 0)]
    first += [(0, 1 + mu, "L", mu) for mu in range(b[0])]
    first.append((0, idle(0), "I", 0))
    first += [(0, carry(0) + c, "M", c) for c in range(bc)]
    layout.append(first)
    for k in range(1, d - 1):
        core = [(0, 0, "I", 0)]
        core += [(1 + mu, 0, "M", mu) for mu in range(b[k - 1])]
        core.append((idle(k - 1), 0, "S", 0))
        core += [(idle(k - 1), 1 + nu, "L", nu) for nu in range(b[k])]
        core.append((idle(k - 1), idle(k), "I", 0))
        core += [(carry(k - 1) + c, carry(k) + c, "J", c) for c in range(bc)]
        layout.append(core)
    last = [(0, 0, "I", 0)]
    last += [(1 + mu, 0, "M", mu) for mu in range(b[d - 2])]
    last.append((idle(d - 2), 0, "S", 0))
    last += [(carry(d - 2) + c, 0, "L", c) for c in range(bc)]
    layout.append(last)
    return layout


def _bond_ranks(betas, d, cyclic):
    bc = betas[d - 1] if cyclic else 0
    return [1] + [2 + betas[k] + bc for k in range(d - 1)] + [1]


def _check_homogeneous(blocks: SlimBlocks):
    d = blocks.d

    def same(xs):
        return all(x.shape == xs[0].shape and np.array_equal(x, xs[0]) for x in xs[1:])

    if not same(blocks.S):
        raise ValueError("homogeneous layout requested but single-cell blocks differ between cells")
    edges = range(d if blocks.cyclic else d - 1)
    for name, lists in (("L", [blocks.L[i] for i in edges]), ("M", [blocks.M[(i + 1) % d] for i in edges])):
        if len({len(x) for x in lists}) > 1:
            raise ValueError(f"homogeneous layout requested but {name} lists differ in length")
        for mu in range(len(lists[0])):
            if not same([x[mu] for x in lists]):
                raise ValueError(f"homogeneous layout requested but {name} factor {mu + 1} differs between edges")


def build_slim_general(blocks: SlimBlocks, homogeneous: bool = False) -> TtOperator | TtTensor:
    """Assemble the SLIM tensor train from per-cell blocks.

    Parameters
    ----------
    blocks : SlimBlocks
    homogeneous : bool
        Declare that every cell carries the same blocks.  The blocks are then
        checked for exact equality so that all interior cores coincide.

    Returns
    -------
    TtOperator or TtTensor
        ``meta`` records the layout (``betas``, ``cyclic``, ``mode``) used by
        :func:`storage_census`.
    """
    if homogeneous:
        _check_homogeneous(blocks)
    d, modes, cyclic = blocks.d, blocks.modes, blocks.cyclic
    betas = blocks.betas
    ranks = _bond_ranks(betas, d, cyclic)
    operator = blocks.mode == "operator"
    layout = slim_layout(betas, d, cyclic)
    cores = []
    for k in range(d):
        n = modes[k]
        ident = np.eye(n) if operator else np.ones(n)
        core = np.zeros((ranks[k],) + ((n, n) if operator else (n,)) + (ranks[k + 1],))
        for row, col, role, item in layout[k]:
            if role == "S":
                blk = blocks.S[k]
            elif role == "L":
                blk = blocks.L[k][item]
            elif role == "M":
                blk = blocks.M[k][item]
            else:
                blk = ident
            core[row, ..., col] = blk
        cores.append(core)
    meta = {
        "layout": "slim",
        "mode": blocks.mode,
        "cyclic": cyclic,
        "betas": list(betas),
        "homogeneous": bool(homogeneous),
    }
    cls = TtOperator if operator else TtTensor
    return cls(tuple(cores), cyclic, meta)


# ---------------------------------------------------------------------------
# pair compression
# ---------------------------------------------------------------------------

def _pow2_scale(norms: np.ndarray) -> np.ndarray:
    """Power-of-two factors mapping each positive norm into ``[0.5, 1)``."""
    scale = np.ones_like(norms)
    pos = norms > 0
    _, expo = np.frexp(norms[pos])
    scale[pos] = np.ldexp(1.0, -expo)
    return scale


def equilibrated_svd(mat: np.ndarray, tol: float = SVD_TOL, sweeps: int = 8):
    """Compact SVD ``mat = U diag(s) Vt`` of a row/column equilibrated matrix.

    Rows and columns are first scaled by exact powers of two so that their
    largest entries are comparable.  The cutoff ``s_k > tol * s_1`` is applied
    to the balanced spectrum and the scaling is then folded back into ``U`` and
    ``Vt``, so no rounding is introduced by the scaling itself.  Without the
    balancing, rates spanning many orders of magnitude hide genuine rank
    behind the relative cutoff.

    Returns
    -------
    U : (m, g) array
    s : (g,) array
    Vt : (g, n) array
    """
    mat = np.asarray(mat, dtype=np.float64)
    dr = np.ones(mat.shape[0])
    dc = np.ones(mat.shape[1])
    bal = mat.copy()
    for _ in range(sweeps):
        fr = _pow2_scale(np.max(np.abs(bal), axis=1))
        bal *= fr[:, None]
        dr *= fr
        fc = _pow2_scale(np.max(np.abs(bal), axis=0))
        bal *= fc[None, :]
        dc *= fc
    u, s, vt = np.linalg.svd(bal, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return u[:, :0], s[:0], vt[:0]
    g = int(np.sum(s > tol * s[0]))
    u = u[:, :g] / dr[:, None]
    vt = vt[:g] / dc[None, :]
    return u, s[:g], vt


def _components(mat: np.ndarray):
    """Connected row/column groups of the nonzero pattern of ``mat``."""
    m, n = mat.shape
    pattern = sp.csr_matrix(mat != 0)
    graph = sp.bmat([[None, pattern], [pattern.T, None]])
    _, labels = connected_components(graph, directed=False)
    groups = []
    seen = {}
    for idx, lab in enumerate(labels):
        if lab not in seen:
            seen[lab] = len(groups)
            groups.append(([], []))
        rows, cols = groups[seen[lab]]
        (rows if idx < m else cols).append(idx if idx < m else idx - m)
    return [(np.array(r, dtype=int), np.array(c, dtype=int)) for r, c in groups if r and c]


def rank_factorization(mat: np.ndarray, tol: float = SVD_TOL):
    """Factor ``mat = left @ right`` with as few terms as its numerical rank.

    The nonzero pattern is split into independent row/column blocks.  A block
    whose rank is below both of its dimensions gets the compact
    :func:`equilibrated_svd` (``left`` from ``U``, ``right`` from
    ``diag(s) Vt``).  A block that cannot be reduced is factored exactly with
    an identity on its shorter side, since an SVD there would only rotate the
    basis and smear rounding across rates of very different size.

    Returns
    -------
    left : (m, g) array
    right : (g, n) array
    """
    mat = np.asarray(mat, dtype=np.float64)
    m, n = mat.shape
    lefts, rights = [], []
    for rows, cols in _components(mat):
        blk = mat[np.ix_(rows, cols)]
        u, s, vt = equilibrated_svd(blk, tol)
        g = s.size
        if g == min(rows.size, cols.size):
            if rows.size <= cols.size:
                u, w = np.eye(rows.size), blk
            else:
                u, w = blk, np.eye(cols.size)
        else:
            w = s[:, None] * vt
        left = np.zeros((m, u.shape[1]))
        left[rows] = u
        right = np.zeros((w.shape[0], n))
        right[:, cols] = w
        lefts.append(left)
        rights.append(right)
    if not lefts:
        return np.zeros((m, 0)), np.zeros((0, n))
    return np.hstack(lefts), np.vstack(rights)


def compress_pair(L_core, M_core, tol: float = SVD_TOL):
    """Reduce a two-core coupling ``sum_k L_k (x) M_k`` to its numerical rank.

    Parameters
    ----------
    L_core : list of (m, m) arrays (or length-m vectors)
    M_core : list of (n, n) arrays (or length-n vectors), same length as ``L_core``
    tol : float
        Relative singular value cutoff.

    Returns
    -------
    L_new, M_new : lists of arrays
        Columns of ``left`` and rows of ``right`` from
        :func:`rank_factorization` of the matricized contraction (the left
        singular vectors and rows of ``diag(s) Vt`` wherever a block is
        actually compressed), reshaped with the little-endian index.
    gamma : int
        Number of retained terms.
    """
    if len(L_core) == 0 or len(M_core) == 0:
        raise ValueError("compress_pair needs at least one coupling term")
    if len(L_core) != len(M_core):
        raise ValueError(f"{len(L_core)} left factors vs {len(M_core)} right factors")
    lshape = np.shape(L_core[0])
    mshape = np.shape(M_core[0])
    left = np.stack([np.ravel(b, order="F") for b in L_core], axis=1)
    right = np.stack([np.ravel(b, order="F") for b in M_core], axis=1)
    # full contraction, rows indexed by (x, y) of the left cell, columns by the right cell
    contraction = left @ right.T
    new_left, new_right = rank_factorization(contraction, tol)
    gamma = new_left.shape[1]
    L_new = [new_left[:, k].reshape(lshape, order="F") for k in range(gamma)]
    M_new = [new_right[k].reshape(mshape, order="F") for k in range(gamma)]
    return L_new, M_new, gamma


# ---------------------------------------------------------------------------
# master-equation generators
# ---------------------------------------------------------------------------

def _scr_block(reactions, n):
    S = np.zeros((n, n))
    for r in reactions:
        a = r.propensity
        S += (shift_matrix(n, -r.net_change) - np.eye(n)) * a[None, :]
    return S


def _tcr_factors(reactions, ni, nj, tol):
    """Left/right factor lists of one edge, in declaration order."""
    L, M = [], []
    for r in reactions:
        p, q = r.net_changes
        gp, gq = shift_matrix(ni, -p), shift_matrix(nj, -q)
        left, right = rank_factorization(r.propensity, tol)
        for k in range(left.shape[1]):
            uk = left[:, k]
            vk = right[k]
            L.append(gp * uk[None, :])
            L.append(-np.diag(uk))
            M.append(gq * vk[None, :])
            M.append(np.diag(vk))
    return L, M


def _raw_markov_blocks(rs: ReactionSystem, tol: float):
    d, modes = rs.d, rs.shape.modes
    S = [_scr_block(rs.scrs[i], modes[i]) for i in range(d)]
    L = [[] for _ in range(d)]
    M = [[] for _ in range(d)]
    for e, reactions in enumerate(rs.tcrs):
        i, j = rs.edge_cells(e)
        L[i], M[j] = _tcr_factors(reactions, modes[i], modes[j], tol)
    return S, L, M


def _compress_edges(rs, L, M, tol):
    # the closing edge is compressed as the pair (L_d, M_1), i.e. with both
    # cores rank-transposed, which is the same call on the factor lists
    for e in range(len(rs.tcrs)):
        i, j = rs.edge_cells(e)
        if L[i]:
            L[i], M[j], _ = compress_pair(L[i], M[j], tol)


def markov_blocks(rs: ReactionSystem, compress: bool = True, tol: float = SVD_TOL) -> SlimBlocks:
    """SLIM blocks of the generator ``sum_mu (G_mu - I) diag(a_mu)``.

    Single-cell reactions collapse into ``S_i``.  Each two-cell propensity is
    split by :func:`rank_factorization` into ``sum_k u_k v_k^T`` and contributes the factor
    pairs ``(G(-p) diag(u_k), G(-q) diag(v_k))`` and ``(-diag(u_k), diag(v_k))``.
    With ``compress`` every edge is then reduced by :func:`compress_pair`.
    """
    S, L, M = _raw_markov_blocks(rs, tol)
    if compress:
        _compress_edges(rs, L, M, tol)
    return SlimBlocks(S, L, M, "operator", rs.shape.cyclic)


def build_slim_markov(rs: ReactionSystem, compress: bool = True, tol: float = SVD_TOL) -> TtOperator:
    """SLIM tensor train of the master-equation generator of ``rs``.

    ``meta["uncompressed_betas"]`` keeps the per-edge coupling counts before
    compression, so the rank formula can be checked on the raw layout.
    """
    S, L, M = _raw_markov_blocks(rs, tol)
    raw = [len(L[rs.edge_cells(e)[0]]) for e in range(len(rs.tcrs))]
    if compress:
        _compress_edges(rs, L, M, tol)
    blocks = SlimBlocks(S, L, M, "operator", rs.shape.cyclic)
    op = build_slim_general(blocks, homogeneous=rs.homogeneous)
    op.meta["compressed"] = bool(compress)
    op.meta["uncompressed_betas"] = raw
    return op


# ---------------------------------------------------------------------------
# storage accounting
# ---------------------------------------------------------------------------

def storage_count(betas, modes, cyclic: bool) -> list[int]:
    """Closed-form per-core parameter counts of a sparse SLIM operator.

    ``S``, ``L`` and ``M`` blocks count as dense ``n_i^2`` matrices, identity
    and ``J`` blocks as their ``n_i`` diagonal entries.
    """
    modes = list(modes)
    d = len(modes)
    b = list(betas)
    bd = b[d - 1] if cyclic else 0
    counts = [(bd + b[0] + 1) * modes[0] ** 2 + modes[0]]
    for i in range(1, d - 1):
        counts.append((b[i - 1] + b[i] + 1) * modes[i] ** 2 + (2 + bd) * modes[i])
    counts.append((b[d - 2] + bd + 1) * modes[-1] ** 2 + modes[-1])
    return counts


def storage_census(op: TtOperator) -> list[int]:
    """Count parameter slots of a constructed SLIM operator core by core.

    Every block position of the layout is visited: ``S``/``L``/``M`` slots cost
    ``n^2`` and ``I``/``J`` slots cost ``n``.  The cores are checked to contain
    nothing outside those positions and to hold exact identities in ``I``/``J``
    slots, so the census reflects what was actually built.
    """
    meta = op.meta
    if meta.get("layout") != "slim":
        raise ValueError("operator does not carry a SLIM layout")
    layout = slim_layout(meta["betas"], op.d, meta["cyclic"])
    counts = []
    for k, core in enumerate(op.cores):
        n = core.shape[1]
        occupied = np.zeros((core.shape[0], core.shape[-1]), dtype=bool)
        total = 0
        for row, col, role, _ in layout[k]:
            occupied[row, col] = True
            if role in ("I", "J"):
                if not np.array_equal(core[row, :, :, col], np.eye(n)):
                    raise ValueError(f"core {k + 1}: slot ({row}, {col}) is not an identity")
                total += n
            else:
                total += n * n
        stray = np.any(core != 0, axis=(1, 2)) & ~occupied
        if np.any(stray):
            raise ValueError(f"core {k + 1}: nonzero blocks outside the layout at {np.argwhere(stray).tolist()}")
        counts.append(total)
    return counts
