"""Reaction systems on a chain or ring of cells, plus the JSON model file format.

States are 1-based per cell; propensity arrays are indexed by ``state - 1``.
A single-cell reaction (SCR) on cell ``i`` moves ``x_i`` by ``net_change``.
A two-cell reaction (TCR) on edge ``i`` couples cell ``i`` with cell ``i + 1``
(cell 1 for the closing edge of a ring) and moves them by ``(p, q)``.

Model file schema (JSON)::

    {
      "format": "slimtt-model/1",
      "name": "cascade",
      "modes": [8, 8, 8, 8],
      "cyclic": false,
      "homogeneous": false,
      "scr": [{"cell": 1, "net_change": 1, "propensity": "constant:0.7"}, ...],
      "tcr": [{"edge": 1, "net_changes": [0, 1], "propensity": "row:hill:5"}, ...]
    }

``cell`` and ``edge`` are 1-based.  ``propensity`` is either an explicit list
(a vector for SCRs, a nested ``n_i x n_j`` list for TCRs) or a named generator:

=================  ====================================================
``constant:c``     ``c`` everywhere
``linear:c``       ``c * count`` with ``count = state - 1``
``hill:K``         ``count / (K + count)``
``nonempty:c``     ``c`` on every state except the first
``row:G``          TCR only: SCR generator ``G`` on the left cell, constant across the right
``col:G``          TCR only: generator on the right cell, constant across the left
``step:c``         TCR only: ``c`` where ``x_i > x_j``
``step_rev:c``     TCR only: ``c`` where ``x_j > x_i``
=================  ====================================================
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dense import Shape

FORMAT = "slimtt-model/1"


@dataclass(frozen=True, eq=False)
class SingleCellReaction:
    propensity: np.ndarray
    net_change: int
    label: str = ""


@dataclass(frozen=True, eq=False)
class TwoCellReaction:
    propensity: np.ndarray
    net_changes: tuple[int, int]
    label: str = ""


@dataclass(frozen=True, eq=False)
class ReactionSystem:
    """Per-cell SCR lists and per-edge TCR lists on a :class:`Shape`.

    ``tcrs`` has ``d - 1`` entries for a chain and ``d`` for a ring, the last
    one being the edge ``(d, 1)``.
    """

    shape: Shape
    scrs: tuple
    tcrs: tuple
    homogeneous: bool = False
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        d = self.shape.d
        n_edges = d if self.shape.cyclic else d - 1
        scrs = tuple(tuple(cell) for cell in self.scrs)
        tcrs = tuple(tuple(edge) for edge in self.tcrs)
        if len(scrs) != d:
            raise ValueError(f"expected SCR lists for {d} cells, got {len(scrs)}")
        if len(tcrs) != n_edges:
            raise ValueError(f"expected TCR lists for {n_edges} edges, got {len(tcrs)}")
        for i, cell in enumerate(scrs):
            n = self.shape.modes[i]
            for r in cell:
                a = np.asarray(r.propensity, dtype=np.float64)
                if a.shape != (n,):
                    raise ValueError(f"cell {i + 1}: SCR propensity has shape {a.shape}, expected ({n},)")
                _check_values(a, f"cell {i + 1} SCR {r.label!r}")
                object.__setattr__(r, "propensity", a)
        for e, edge in enumerate(tcrs):
            i, j = self.edge_cells(e)
            want = (self.shape.modes[i], self.shape.modes[j])
            for r in edge:
                a = np.asarray(r.propensity, dtype=np.float64)
                if a.shape != want:
                    raise ValueError(f"edge {e + 1}: TCR propensity has shape {a.shape}, expected {want}")
                _check_values(a, f"edge {e + 1} TCR {r.label!r}")
                object.__setattr__(r, "propensity", a)
                object.__setattr__(r, "net_changes", (int(r.net_changes[0]), int(r.net_changes[1])))
        object.__setattr__(self, "scrs", scrs)
        object.__setattr__(self, "tcrs", tcrs)

    @property
    def d(self) -> int:
        return self.shape.d

    def edge_cells(self, e: int) -> tuple[int, int]:
        """0-based cells ``(i, j)`` joined by edge ``e`` (0-based)."""
        return e, (e + 1) % self.shape.d

    def counts(self) -> tuple[list[int], list[int]]:
        """``alpha_i`` (SCRs per cell) and ``beta_i`` (TCRs per edge)."""
        return [len(c) for c in self.scrs], [len(e) for e in self.tcrs]


def _check_values(a, where):
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{where}: propensity has non-finite entries")
    if np.any(a < 0):
        raise ValueError(f"{where}: propensity has negative entries")


# ---------------------------------------------------------------------------
# named generators
# ---------------------------------------------------------------------------

def _vector_generator(rule: str, n: int) -> np.ndarray:
    kind, _, arg = rule.partition(":")
    count = np.arange(n, dtype=np.float64)
    if kind == "constant":
        return np.full(n, float(arg))
    if kind == "linear":
        return float(arg) * count
    if kind == "hill":
        return count / (float(arg) + count)
    if kind == "nonempty":
        out = np.full(n, float(arg))
        out[0] = 0.0
        return out
    raise ValueError(f"unknown propensity generator {rule!r}")


def _matrix_generator(rule: str, n_i: int, n_j: int) -> np.ndarray:
    kind, _, arg = rule.partition(":")
    if kind == "row":
        return np.repeat(_vector_generator(arg, n_i)[:, None], n_j, axis=1)
    if kind == "col":
        return np.repeat(_vector_generator(arg, n_j)[None, :], n_i, axis=0)
    if kind == "constant":
        return np.full((n_i, n_j), float(arg))
    if kind in ("step", "step_rev"):
        diff = np.arange(n_i)[:, None] - np.arange(n_j)[None, :]
        if kind == "step_rev":
            diff = -diff
        return np.where(diff > 0, float(arg), 0.0)
    raise ValueError(f"unknown two-cell propensity generator {rule!r}")


# ---------------------------------------------------------------------------
# model files
# ---------------------------------------------------------------------------

def to_dict(rs: ReactionSystem) -> dict:
    scr = [
        {"cell": i + 1, "net_change": r.net_change, "label": r.label, "propensity": r.propensity.tolist()}
        for i, cell in enumerate(rs.scrs)
        for r in cell
    ]
    tcr = [
        {
            "edge": e + 1,
            "net_changes": list(r.net_changes),
            "label": r.label,
            "propensity": r.propensity.tolist(),
        }
        for e, edge in enumerate(rs.tcrs)
        for r in edge
    ]
    return {
        "format": FORMAT,
        "name": rs.name,
        "modes": list(rs.shape.modes),
        "cyclic": rs.shape.cyclic,
        "homogeneous": rs.homogeneous,
        "scr": scr,
        "tcr": tcr,
    }


def from_dict(data: dict) -> ReactionSystem:
    if data.get("format", FORMAT) != FORMAT:
        raise ValueError(f"unsupported model format {data.get('format')!r}")
    shape = Shape(data["modes"], bool(data.get("cyclic", False)))
    d = shape.d
    n_edges = d if shape.cyclic else d - 1
    scrs = [[] for _ in range(d)]
    tcrs = [[] for _ in range(n_edges)]
    for entry in data.get("scr", []):
        i = int(entry["cell"]) - 1
        if not 0 <= i < d:
            raise ValueError(f"SCR cell {entry['cell']} outside 1..{d}")
        prop = entry["propensity"]
        a = _vector_generator(prop, shape.modes[i]) if isinstance(prop, str) else np.array(prop, dtype=float)
        scrs[i].append(SingleCellReaction(a, int(entry["net_change"]), entry.get("label", "")))
    for entry in data.get("tcr", []):
        e = int(entry["edge"]) - 1
        if not 0 <= e < n_edges:
            raise ValueError(f"TCR edge {entry['edge']} outside 1..{n_edges}")
        ni, nj = shape.modes[e], shape.modes[(e + 1) % d]
        prop = entry["propensity"]
        a = _matrix_generator(prop, ni, nj) if isinstance(prop, str) else np.array(prop, dtype=float)
        p, q = entry["net_changes"]
        tcrs[e].append(TwoCellReaction(a, (int(p), int(q)), entry.get("label", "")))
    return ReactionSystem(
        shape, scrs, tcrs, bool(data.get("homogeneous", False)), data.get("name", "")
    )


def save_model(path, rs: ReactionSystem) -> Path:
    path = Path(path)
    # json writes floats with repr, which round-trips doubles exactly
    path.write_text(json.dumps(to_dict(rs), indent=1))
    return path


def load_model(path) -> ReactionSystem:
    return from_dict(json.loads(Path(path).read_text()))
