"""Example systems: Ising ring, coupled oscillators, signal cascade, CO oxidation, toll station.

Each builder takes a parameter dataclass whose defaults are the published
constants.  States are 1-based; physical counts are ``state - 1``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .dense import DenseOperator, DenseTensor, Shape, kron_cells
from .reactions import ReactionSystem, SingleCellReaction, TwoCellReaction
from .slim import SlimBlocks, build_slim_general
from .tt import TtOperator, TtTensor


# ---------------------------------------------------------------------------
# Ising ring (tensor mode)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IsingParams:
    d: int = 10
    J: float = 1.0
    mu_h: float = 0.5

    def __post_init__(self):
        if self.d < 3:
            raise ValueError("the Ising ring needs d >= 3")


_SPIN = np.array([1.0, -1.0])  # state 1 is spin +1, state 2 is spin -1


def ising_blocks(p: IsingParams) -> SlimBlocks:
    S = -p.mu_h * _SPIN
    L = -p.J * _SPIN
    M = _SPIN.copy()
    return SlimBlocks(
        [S] * p.d, [[L]] * p.d, [[M]] * p.d, mode="tensor", cyclic=True
    )


def build_ising(p: IsingParams = IsingParams()) -> TtTensor:
    """Energy tensor ``H[y_1..y_d] = -J sum x_i x_{i+1} - mu_h sum x_i`` as a SLIM TT."""
    t = build_slim_general(ising_blocks(p), homogeneous=True)
    t.meta["model"] = "ising"
    return t


def ising_energy(spins, J: float, mu_h: float) -> float:
    d = len(spins)
    return -J * sum(spins[i] * spins[(i + 1) % d] for i in range(d)) - mu_h * sum(spins)


def ising_dense(p: IsingParams) -> DenseTensor:
    """Brute-force energy of every state."""
    shape = Shape([2] * p.d, cyclic=True)
    arr = np.zeros(shape.modes)
    for y in itertools.product(range(2), repeat=p.d):
        arr[y] = ising_energy([_SPIN[k] for k in y], p.J, p.mu_h)
    return DenseTensor.from_array(arr, cyclic=True)


# ---------------------------------------------------------------------------
# linearly coupled oscillators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OscillatorParams:
    d: int = 4
    m: int = 1
    mass: float = 1.0
    omega: float = 1.0
    c: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        if self.d < 3:
            raise ValueError("the periodic oscillator chain needs d >= 3")
        if self.m < 1:
            raise ValueError("grid half-width m must be >= 1")

    @property
    def h(self) -> float:
        return 1.0 / self.m

    @property
    def n(self) -> int:
        return 2 * self.m + 1


def momentum_stencil(m: int) -> np.ndarray:
    """Tridiagonal second-difference matrix ``D_p`` on ``2m + 1`` points."""
    n = 2 * m + 1
    return 2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)


def position_matrix(m: int) -> np.ndarray:
    """``D_x = diag(k h)`` for ``k = -m..m`` with ``h = 1/m``."""
    return np.diag(np.arange(-m, m + 1) / m)


def oscillator_blocks(p: OscillatorParams) -> SlimBlocks:
    Dp, Dx = momentum_stencil(p.m), position_matrix(p.m)
    Dx2 = Dx @ Dx
    S = p.hbar**2 / (2.0 * p.mass * p.h**2) * Dp + 0.5 * p.mass * p.omega**2 * Dx2 + p.c * p.mass * Dx2
    L = -p.c * p.mass * Dx
    return SlimBlocks([S] * p.d, [[L]] * p.d, [[Dx]] * p.d, mode="operator", cyclic=True)


def build_oscillator(p: OscillatorParams = OscillatorParams()) -> TtOperator:
    """Discretized Hamiltonian of ``d`` identical oscillators on a ring."""
    op = build_slim_general(oscillator_blocks(p), homogeneous=True)
    op.meta["model"] = "oscillator"
    return op


def oscillator_dense(p: OscillatorParams) -> DenseOperator:
    """Term-by-term dense Hamiltonian, with the spring term squared explicitly."""
    n, d = p.n, p.d
    eye = np.eye(n)
    Dp, Dx = momentum_stencil(p.m), position_matrix(p.m)

    def at(i, mat):
        return kron_cells([mat if k == i else eye for k in range(d)])

    p2 = (p.hbar / p.h) ** 2 * Dp
    total = np.zeros((n**d, n**d))
    for i in range(d):
        diff = at(i, Dx) - at((i + 1) % d, Dx)
        total += at(i, p2) / (2.0 * p.mass)
        total += 0.5 * p.mass * p.omega**2 * at(i, Dx @ Dx)
        total += 0.5 * p.c * p.mass * (diff @ diff)
    return DenseOperator.from_matrix(total, Shape([n] * d, cyclic=True))


# ---------------------------------------------------------------------------
# signal cascade
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CascadeParams:
    d: int = 20
    n: int = 64
    creation: float = 0.7
    hill_offset: float = 5.0
    destruction: float = 0.07

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("cascade needs n >= 2")
        if self.d < 2:
            raise ValueError("cascade needs d >= 2")


def cascade_destruction(p: CascadeParams) -> np.ndarray:
    return p.destruction * np.arange(p.n, dtype=np.float64)


def cascade_hill(p: CascadeParams) -> np.ndarray:
    count = np.arange(p.n, dtype=np.float64)
    return count / (p.hill_offset + count)


def build_cascade(p: CascadeParams = CascadeParams()) -> ReactionSystem:
    """Gene cascade: protein ``i`` is produced at a rate set by protein ``i - 1``."""
    shape = Shape([p.n] * p.d)
    decay = cascade_destruction(p)
    scrs = []
    for i in range(p.d):
        cell = []
        if i == 0:
            cell.append(SingleCellReaction(np.full(p.n, p.creation), +1, "creation"))
        cell.append(SingleCellReaction(decay, -1, "destruction"))
        scrs.append(cell)
    hill = np.repeat(cascade_hill(p)[:, None], p.n, axis=1)
    tcrs = [[TwoCellReaction(hill, (0, +1), "induced creation")] for _ in range(p.d - 1)]
    return ReactionSystem(shape, scrs, tcrs, homogeneous=False, name="cascade")


# ---------------------------------------------------------------------------
# CO oxidation on a ring of cus sites
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoOxidationParams:
    d: int = 5
    k_O2_Ad: float = 9.7e7
    k_CO_Ad: float = 1e4
    k_O2_De: float = 2.8e1
    k_CO_De: float = 9.2e6
    k_CO2_De: float = 1.7e5
    k_O_Diff: float = 0.5
    k_CO_Diff: float = 6.6e-2

    def __post_init__(self):
        if self.d < 3:
            raise ValueError("the cus ring needs d >= 3")


# site states: 1 empty, 2 oxygen, 3 carbon monoxide
def _single(row, col, value):
    a = np.zeros((3, 3))
    a[row - 1, col - 1] = value
    return a


def co_tcr_list(p: CoOxidationParams) -> list[TwoCellReaction]:
    return [
        TwoCellReaction(_single(1, 1, p.k_O2_Ad), (+1, +1), "O2 adsorption"),
        TwoCellReaction(_single(2, 2, p.k_O2_De), (-1, -1), "O2 desorption"),
        TwoCellReaction(_single(3, 2, p.k_CO2_De), (-2, -1), "CO2 formation, CO left"),
        TwoCellReaction(_single(2, 3, p.k_CO2_De), (-1, -2), "CO2 formation, CO right"),
        TwoCellReaction(_single(2, 1, p.k_O_Diff), (-1, +1), "O hop right"),
        TwoCellReaction(_single(1, 2, p.k_O_Diff), (+1, -1), "O hop left"),
        TwoCellReaction(_single(3, 1, p.k_CO_Diff), (-2, +2), "CO hop right"),
        TwoCellReaction(_single(1, 3, p.k_CO_Diff), (+2, -2), "CO hop left"),
    ]


def build_co_oxidation(p: CoOxidationParams = CoOxidationParams()) -> ReactionSystem:
    shape = Shape([3] * p.d, cyclic=True)
    scr = [
        SingleCellReaction(np.array([p.k_CO_Ad, 0.0, 0.0]), +2, "CO adsorption"),
        SingleCellReaction(np.array([0.0, 0.0, p.k_CO_De]), -2, "CO desorption"),
    ]
    tcr = co_tcr_list(p)
    return ReactionSystem(shape, [list(scr) for _ in range(p.d)], [list(tcr) for _ in range(p.d)],
                          homogeneous=True, name="co2")


# ---------------------------------------------------------------------------
# toll station
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TollParams:
    d: int = 20
    n: int = 10
    sigma2_in: float = 2.5
    sigma2_out_left: float = 1.0
    sigma2_out_right: float = 0.5
    nu_out_left: float = -1.5
    nu_out_right: float = 1.5
    in_offset: float = 0.05
    change_rate: float = 5.0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("toll station needs n >= 2")
        if self.d < 2:
            raise ValueError("toll station needs d >= 2")

    def lane_position(self, i: int) -> float:
        """Position ``t_i`` of lane ``i`` (1-based)."""
        return -2.0 + 0.5 * (i - 1)


def _gauss(t, mean, var):
    return math.exp(-0.5 * (t - mean) ** 2 / var) / math.sqrt(2.0 * math.pi * var)


def f_in(t: float, p: TollParams = TollParams()) -> float:
    return _gauss(t, 0.0, p.sigma2_in) + p.in_offset


def f_out(t: float, p: TollParams = TollParams()) -> float:
    return _gauss(t, p.nu_out_left, p.sigma2_out_left) + _gauss(t, p.nu_out_right, p.sigma2_out_right)


def f_change(delta, p: TollParams = TollParams()):
    return np.where(np.asarray(delta) > 0, p.change_rate, 0.0)


def build_toll(p: TollParams = TollParams()) -> ReactionSystem:
    """Queues in ``d`` lanes with arrivals, departures and lane changes to shorter neighbors."""
    n = p.n
    shape = Shape([n] * p.d)
    nonempty = np.ones(n)
    nonempty[0] = 0.0
    scrs = []
    for i in range(1, p.d + 1):
        t = p.lane_position(i)
        scrs.append([
            SingleCellReaction(f_in(t, p) * np.ones(n), +1, "arrival"),
            SingleCellReaction(f_out(t, p) * nonempty, -1, "departure"),
        ])
    diff = np.arange(n)[:, None] - np.arange(n)[None, :]  # x_i - x_{i+1}
    right = f_change(diff, p)
    left = f_change(-diff, p)
    tcrs = [
        [
            TwoCellReaction(right, (-1, +1), "change right"),
            TwoCellReaction(left, (+1, -1), "change left"),
        ]
        for _ in range(p.d - 1)
    ]
    return ReactionSystem(shape, scrs, tcrs, homogeneous=False, name="toll")


# ---------------------------------------------------------------------------
# registry used by the command line
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelEntry:
    name: str
    params: type
    kind: str  # "markov", "tensor" or "operator"
    builder: object


MODELS = {
    "ising": ModelEntry("ising", IsingParams, "tensor", build_ising),
    "oscillator": ModelEntry("oscillator", OscillatorParams, "operator", build_oscillator),
    "cascade": ModelEntry("cascade", CascadeParams, "markov", build_cascade),
    "co2": ModelEntry("co2", CoOxidationParams, "markov", build_co_oxidation),
    "toll": ModelEntry("toll", TollParams, "markov", build_toll),
}


def _coerce_int(key, raw) -> int:
    value = float(raw)
    if not value.is_integer():
        raise ValueError(f"parameter {key!r} must be an integer, got {raw!r}")
    return int(value)


def make_params(name: str, overrides: dict):
    """Instantiate a model's parameters, coercing override strings to field types."""
    entry = MODELS[name]
    base = entry.params()
    known = {f.name: f for f in fields(entry.params)}
    values = {}
    for key, raw in overrides.items():
        if key not in known:
            raise KeyError(f"model {name!r} has no parameter {key!r}; known: {sorted(known)}")
        kind = type(getattr(base, key))
        values[key] = _coerce_int(key, raw) if kind is int else kind(raw)
    return replace(base, **values)
