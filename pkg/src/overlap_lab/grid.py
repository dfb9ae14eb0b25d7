"""Finite overlap grids and exact level-indexed overlap matrices.

Overlap values live on a finite ascending grid q_1 < ... < q_k. Matrices
store grid-level indices (1-based; 0 marks the diagonal), never floats,
so events like "entry equals the top level" are exact integer comparisons.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .errors import GridTooSmall

DIAG = 0  # sentinel stored on the diagonal of a level matrix

PROB_SUM_TOL = 1e-12
LEVEL_MATCH_TOL = 1e-10


@dataclass(frozen=True)
class OverlapGrid:
    """Ascending support values, optional level probabilities, diagonal value."""

    levels: tuple
    probs: Optional[tuple] = None
    self_overlap: float = 1.0

    def __post_init__(self):
        levels = tuple(float(q) for q in self.levels)
        object.__setattr__(self, "levels", levels)
        if len(levels) < 1:
            raise ValueError("grid needs at least one level")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("levels must be strictly increasing")
        if levels[0] < -1.0 or levels[-1] > 1.0:
            raise ValueError("levels must lie in [-1, 1]")
        if self.probs is not None:
            probs = tuple(float(p) for p in self.probs)
            object.__setattr__(self, "probs", probs)
            if len(probs) != len(levels):
                raise ValueError("probs length must match levels")
            if any(p <= 0.0 for p in probs):
                raise ValueError("probs must be positive")
            if abs(sum(probs) - 1.0) > PROB_SUM_TOL:
                raise ValueError("probs must sum to 1")
        if self.self_overlap < levels[-1]:
            raise ValueError("self_overlap must be >= top level")

    @property
    def k(self) -> int:
        return len(self.levels)

    def values_by_index(self) -> np.ndarray:
        """Lookup array: index 0 -> self_overlap, index l -> levels[l-1]."""
        return np.array([self.self_overlap, *self.levels])

    def level_of(self, value: float, tol: float = LEVEL_MATCH_TOL) -> int:
        """1-based index of the grid level within tol of value, or -1."""
        arr = np.asarray(self.levels)
        j = int(np.argmin(np.abs(arr - value)))
        return j + 1 if abs(arr[j] - value) <= tol else -1

    def threshold_below(self, q: float) -> int:
        """Largest level index whose value is < q (0 if none)."""
        return int(np.searchsorted(np.asarray(self.levels), q, side="left"))

    def truncated(self) -> "OverlapGrid":
        """Drop the top level; diagonal becomes the new top value."""
        if self.k < 2:
            raise GridTooSmall("cannot truncate a single-level grid")
        return OverlapGrid(self.levels[:-1], None, self.levels[-2])

    def to_json_dict(self) -> dict:
        return {
            "levels": list(self.levels),
            "probs": list(self.probs) if self.probs is not None else None,
            "self_overlap": self.self_overlap,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "OverlapGrid":
        return cls(tuple(d["levels"]),
                   tuple(d["probs"]) if d.get("probs") is not None else None,
                   float(d["self_overlap"]))


@dataclass(frozen=True)
class ViolationReport:
    triples_checked: int
    violations: int
    first_witness: Optional[tuple] = None  # ((a, b, c), (lab, lac, lbc))


class LevelMatrix:
    """Symmetric n x n matrix of grid-level indices with a DIAG diagonal."""

    def __init__(self, entries: np.ndarray, grid: OverlapGrid):
        entries = np.asarray(entries, dtype=np.int16)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError("entries must be square")
        n = entries.shape[0]
        if not np.array_equal(entries, entries.T):
            raise ValueError("entries must be symmetric")
        if not np.all(np.diag(entries) == DIAG):
            raise ValueError("diagonal entries must be DIAG")
        off = entries[~np.eye(n, dtype=bool)]
        if off.size and (off.min() < 1 or off.max() > grid.k):
            raise ValueError("off-diagonal entries must be level indices in 1..k")
        entries = entries.copy()
        entries.setflags(write=False)
        self.entries = entries
        self.grid = grid
        self.n = n

    def __eq__(self, other):
        return (isinstance(other, LevelMatrix) and self.grid == other.grid
                and np.array_equal(self.entries, other.entries))

    def realize(self) -> np.ndarray:
        """Dense float matrix: level values off-diagonal, self_overlap on it."""
        return self.grid.values_by_index()[self.entries]

    def to_json_dict(self) -> dict:
        rows = []
        for i in range(self.n):
            rows.append(["D" if j == i else int(self.entries[i, j]) for j in range(self.n)])
        return {"n": self.n, "grid": self.grid.to_json_dict(), "entries": rows}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json_dict(cls, d: dict) -> "LevelMatrix":
        grid = OverlapGrid.from_json_dict(d["grid"])
        n = int(d["n"])
        entries = np.zeros((n, n), dtype=np.int16)
        for i, row in enumerate(d["entries"]):
            for j, e in enumerate(row):
                entries[i, j] = DIAG if e == "D" else int(e)
        return cls(entries, grid)

    @classmethod
    def from_json(cls, s: str) -> "LevelMatrix":
        return cls.from_json_dict(json.loads(s))


def realize(matrix: LevelMatrix) -> np.ndarray:
    return matrix.realize()


def check_ultrametric(matrix: LevelMatrix) -> ViolationReport:
    """Count triples whose minimum pairwise level is attained only once."""
    if matrix.n < 3:
        return ViolationReport(0, 0, None)
    checked, violations, witness = _kernels.ultra_full(matrix.entries)
    first = None
    if violations > 0:
        a, b, c, lab, lac, lbc = (int(x) for x in witness)
        first = ((a, b, c), (lab, lac, lbc))
    return ViolationReport(int(checked), int(violations), first)


def check_ultrametric_batch(levels_batch: np.ndarray,
                            triples: Optional[np.ndarray] = None) -> ViolationReport:
    """Triple scan over a (T, n, n) batch of level matrices.

    With triples=None every triple of every matrix is checked; otherwise
    triples is an (S, 4) array of (t, a, b, c) rows.
    """
    T, n, _ = levels_batch.shape
    if triples is None:
        checked = 0
        violations = 0
        first = None
        for t in range(T):
            c, v, w = _kernels.ultra_full(levels_batch[t])
            checked += int(c)
            if v and first is None:
                a, b, cc, lab, lac, lbc = (int(x) for x in w)
                first = ((a, b, cc), (lab, lac, lbc))
            violations += int(v)
        return ViolationReport(checked, violations, first)
    checked, violations, witness = _kernels.ultra_triples(levels_batch, triples)
    first = None
    if violations > 0:
        a, b, c, lab, lac, lbc = (int(x) for x in witness)
        first = ((a, b, c), (lab, lac, lbc))
    return ViolationReport(int(checked), int(violations), first)


def sample_triples(n: int, count: int, rng: np.random.Generator,
                   n_matrices: int = 1) -> np.ndarray:
    """Uniform (t, a, b, c) rows with a < b < c, for sampled triple scans."""
    if n < 3:
        raise ValueError("need n >= 3 to sample triples")
    t = rng.integers(0, n_matrices, size=count)
    rows = []
    need = count
    while need > 0:
        cand = rng.integers(0, n, size=(int(need * 1.3) + 8, 3))
        distinct = ((cand[:, 0] != cand[:, 1]) & (cand[:, 0] != cand[:, 2])
                    & (cand[:, 1] != cand[:, 2]))
        cand = cand[distinct][:need]
        rows.append(cand)
        need -= len(cand)
    abc = np.sort(np.concatenate(rows), axis=1)
    return np.column_stack([t, abc])


FULL_SCAN_LIMIT = 200  # enumerate all C(n,3) triples up to this n


def check_ultrametric_adaptive(matrix: LevelMatrix, rng: np.random.Generator,
                               sampled: int = 1_000_000) -> ViolationReport:
    """Full scan for n <= FULL_SCAN_LIMIT, uniform sampled triples beyond."""
    if matrix.n <= FULL_SCAN_LIMIT:
        return check_ultrametric(matrix)
    triples = sample_triples(matrix.n, sampled, rng)
    return check_ultrametric_batch(matrix.entries[None, :, :], triples)


def truncate(matrix: LevelMatrix) -> LevelMatrix:
    """Entrywise minimum with the second-highest level; drops the top level."""
    grid = matrix.grid
    new_grid = grid.truncated()  # raises GridTooSmall for k == 1
    entries = np.minimum(matrix.entries, grid.k - 1)
    entries[np.diag_indices(matrix.n)] = DIAG
    return LevelMatrix(entries, new_grid)


def matrix_from_offdiag(n: int, offdiag_levels: Sequence[int], grid: OverlapGrid) -> LevelMatrix:
    """Build a LevelMatrix from row-major upper-triangle level indices."""
    entries = np.zeros((n, n), dtype=np.int16)
    iu, ju = np.triu_indices(n, k=1)
    vals = np.asarray(offdiag_levels, dtype=np.int16)
    if vals.shape != iu.shape:
        raise ValueError("wrong number of off-diagonal entries")
    entries[iu, ju] = vals
    entries[ju, iu] = vals
    return LevelMatrix(entries, grid)
