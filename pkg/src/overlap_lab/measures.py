"""Discrete directing measures on a finite-dimensional sphere.

Three families:
  * hierarchical tree measures driven by normalized power-law point weights
    (the positive controls: their overlap arrays are ultrametric by
    construction and satisfy the replica identities as branching grows),
  * explicit user-specified atom/weight measures,
  * a fixed 3-atom adversarial measure whose overlap pattern is PSD and
    exchangeable but not ultrametric (the negative control).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import BadWeights, BadZeta, OffGridOverlap, TooManyAtoms
from .grid import LEVEL_MATCH_TOL, OverlapGrid

ATOM_COUNT_GUARD = 10**6
TABLE_CAP = 3200          # materialize the m x m pair-level table below this
DENSE_ATOM_CAP = 8_000_000  # materialize (m, d) atom array when m*d stays below

WEIGHT_SUM_TOL = 1e-12
SPHERE_TOL = 1e-10


def seed_sequence(*keys) -> np.random.SeedSequence:
    """Deterministic seed stream for a tuple of integer keys."""
    return np.random.SeedSequence([int(k) & 0xFFFFFFFFFFFFFFFF for k in keys])


def rng_from(*keys) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_sequence(*keys)))


def derive_seed(*keys) -> int:
    """Collapse a key tuple into a single 64-bit child seed."""
    return int(seed_sequence(*keys).generate_state(1, np.uint64)[0])


def pd_points(zeta: float, B: int, rng: np.random.Generator) -> np.ndarray:
    """Top-B unnormalized points of the power-law Poisson process,
    descending: partial exponential sums raised to -1/zeta."""
    if not 0.0 < zeta < 1.0:
        raise BadZeta(f"zeta must be in (0,1), got {zeta}")
    if B < 1:
        raise ValueError("B must be >= 1")
    arrivals = np.cumsum(rng.exponential(1.0, size=B))
    return arrivals ** (-1.0 / zeta)


def sample_pd_weights(zeta: float, B: int, seed) -> np.ndarray:
    """Top-B normalized points of the power-law Poisson process.

    The normalized sequence approximates the classical random weight
    sequence with E sum(w_i^2) -> 1 - zeta as B grows.
    """
    rng = seed if isinstance(seed, np.random.Generator) else rng_from(seed)
    points = pd_points(zeta, B, rng)
    return points / points.sum()


@dataclass(frozen=True)
class TreeMeasureSpec:
    """Depth-k B-ary hierarchy; probs are emergent, not prescribed."""

    q: tuple               # q_1 < ... < q_k, all positive
    branching: int
    zetas: tuple           # 0 < zeta_1 < ... < zeta_k < 1
    seed: int = 0

    def __post_init__(self):
        q = tuple(float(v) for v in self.q)
        zetas = tuple(float(z) for z in self.zetas)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "zetas", zetas)
        if len(q) < 1:
            raise ValueError("need at least one overlap value")
        if q[0] <= 0.0 or any(b <= a for a, b in zip(q, q[1:])) or q[-1] > 1.0:
            raise ValueError("q must be strictly increasing in (0, 1]")
        if len(zetas) != len(q):
            raise ValueError("need one zeta per depth")
        if any(not 0.0 < z < 1.0 for z in zetas):
            raise BadZeta("zetas must lie in (0,1)")
        if any(b <= a for a, b in zip(zetas, zetas[1:])):
            raise ValueError("zetas must be strictly increasing")
        if self.branching < 2:
            raise ValueError("branching must be >= 2")

    @property
    def depth(self) -> int:
        return len(self.q)


class DiscreteMeasure:
    """Finitely many atoms with positive weights summing to one.

    Overlap levels of atom pairs are precomputed: either as an m x m
    int16 table (small m) or derived on the fly from tree path digits
    (large hierarchical measures). A table entry of -1 marks an inner
    product matching no grid level; drawing such a pair raises.
    """

    def __init__(self, weights: np.ndarray, grid: OverlapGrid, kind: str,
                 atoms: Optional[np.ndarray] = None,
                 table: Optional[np.ndarray] = None,
                 tree_digits: Optional[np.ndarray] = None,
                 norms_sq: Optional[np.ndarray] = None):
        weights = np.asarray(weights, dtype=np.float64)
        if weights.ndim != 1 or len(weights) == 0:
            raise BadWeights("weights must be a nonempty vector")
        if np.any(weights <= 0.0):
            raise BadWeights("weights must be positive")
        if abs(weights.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise BadWeights(f"weights sum to {weights.sum()!r}, not 1")
        if table is None and tree_digits is None:
            raise ValueError("need a pair-level table or tree digits")
        self.weights = weights
        self.grid = grid
        self.kind = kind
        self.atoms = atoms
        self._table = table
        self._digits = tree_digits
        if norms_sq is not None:
            self.norms_sq = np.asarray(norms_sq, dtype=np.float64)
        elif atoms is not None:
            self.norms_sq = np.einsum("ij,ij->i", atoms, atoms)
        else:
            raise ValueError("need atom norms")
        self._cum = np.cumsum(weights)
        self._cum[-1] = 1.0

    @property
    def m(self) -> int:
        return len(self.weights)

    @property
    def table(self) -> Optional[np.ndarray]:
        return self._table

    def require_table(self) -> np.ndarray:
        if self._table is None:
            raise TooManyAtoms("pair-level table not materialized for this measure")
        return self._table

    def sample_indices(self, n: int, count: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.random((count, n))
        return np.searchsorted(self._cum, u).astype(np.int64)

    def pair_level(self, i: int, j: int) -> int:
        if self._table is not None:
            lv = int(self._table[i, j])
        else:
            eq = self._digits[i] == self._digits[j]
            stop = int(np.argmin(eq)) if not eq.all() else len(eq)
            lv = stop + 1
        if lv < 1:
            raise OffGridOverlap(f"atoms ({i},{j}) have an off-grid inner product")
        return lv

    def levels_from_indices(self, idx: np.ndarray) -> np.ndarray:
        """(T, n) atom indices -> (T, n, n) symmetric level matrices, DIAG=0."""
        idx = np.asarray(idx)
        if self._table is not None:
            lv = self._table[idx[:, :, None], idx[:, None, :]].astype(np.int16)
            if np.any(lv < 0):
                raise OffGridOverlap("drawn pair has an off-grid inner product")
        else:
            dg = self._digits[idx]  # (T, n, k)
            eq = dg[:, :, None, :] == dg[:, None, :, :]
            lv = (np.cumprod(eq, axis=3).sum(axis=3) + 1).astype(np.int16)
        n = idx.shape[1]
        lv[:, np.arange(n), np.arange(n)] = 0
        return lv

    def pair_level_probs(self) -> np.ndarray:
        """Exact two-replica level probabilities, index 1..k (index 0 unused)."""
        k = self.grid.k
        out = np.zeros(k + 1)
        if self._table is not None:
            outer = np.outer(self.weights, self.weights)
            flat = np.bincount(self._table.ravel() + 1,
                               weights=outer.ravel(), minlength=k + 2)
            if flat[0] > 0:
                raise OffGridOverlap("measure has off-grid pairs")
            out[:] = flat[1:]
        else:
            probs = _tree_level_probs(self.weights, self._digits)
            out[1:] = probs
        return out

    def to_json_dict(self) -> dict:
        if self.atoms is None:
            raise TooManyAtoms("atoms not materialized; measure too large to serialize")
        return {
            "kind": self.kind,
            "grid": self.grid.to_json_dict(),
            "weights": [float(w) for w in self.weights],
            "atoms": [[float(x) for x in a] for a in self.atoms],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "DiscreteMeasure":
        grid = OverlapGrid.from_json_dict(d["grid"])
        atoms = np.asarray(d["atoms"], dtype=np.float64)
        kind = d.get("kind", "explicit")
        return explicit_measure(atoms, np.asarray(d["weights"]), grid,
                                kind=kind, on_sphere=False)


def _level_table_from_gram(gram: np.ndarray, grid: OverlapGrid,
                           strict: bool) -> np.ndarray:
    """Map every pairwise inner product to its grid level (or -1)."""
    levels = np.asarray(grid.levels)
    pos = np.searchsorted(levels, gram)
    table = np.full(gram.shape, -1, dtype=np.int16)
    for cand in (np.clip(pos - 1, 0, len(levels) - 1), np.clip(pos, 0, len(levels) - 1)):
        match = np.abs(levels[cand] - gram) <= LEVEL_MATCH_TOL
        table[match] = cand[match] + 1
    if strict and np.any(table < 0):
        i, j = np.argwhere(table < 0)[0]
        raise OffGridOverlap(
            f"inner product {gram[i, j]!r} of atoms ({i},{j}) matches no grid level")
    return table


def explicit_measure(atoms, weights, grid: OverlapGrid, kind: str = "explicit",
                     on_sphere: bool = True) -> DiscreteMeasure:
    """Measure from explicit atoms; validates weights and (optionally) support.

    on_sphere demands every squared norm equal the top grid level and every
    inner product sit on the grid; disable it for deliberately broken inputs.
    """
    atoms = np.atleast_2d(np.asarray(atoms, dtype=np.float64))
    weights = np.asarray(weights, dtype=np.float64)
    if len(atoms) != len(weights):
        raise BadWeights("one weight per atom required")
    gram = atoms @ atoms.T
    table = _level_table_from_gram(gram, grid, strict=on_sphere)
    measure = DiscreteMeasure(weights, grid, kind, atoms=atoms, table=table)
    if on_sphere:
        dev = np.max(np.abs(measure.norms_sq - grid.levels[-1]))
        if dev > SPHERE_TOL:
            raise OffGridOverlap(
                f"atom norms deviate from the top level by {dev:.3e}")
    return measure


def measure_from_gram(gram: np.ndarray, weights, grid: OverlapGrid,
                      kind: str = "explicit") -> DiscreteMeasure:
    """Atoms realized by Cholesky factorization of a PSD Gram matrix."""
    gram = np.asarray(gram, dtype=np.float64)
    atoms = np.linalg.cholesky(gram)
    return explicit_measure(atoms, weights, grid, kind=kind)


ADVERSARIAL_GRAM = np.array([
    [1.0, 0.7, 0.7],
    [0.7, 1.0, 0.3],
    [0.7, 0.3, 1.0],
])


def adversarial_measure(seed: int = 0) -> DiscreteMeasure:
    """Fixed 3-atom equal-weight measure with a non-ultrametric overlap pattern.

    The pattern (0.7, 0.7, 0.3) has a unique minimum, so three distinct
    replicas always violate ultrametricity; the Gram matrix is still PSD.
    The seed is accepted for interface uniformity and ignored.
    """
    del seed
    grid = OverlapGrid((0.3, 0.7, 1.0), (2 / 9, 4 / 9, 3 / 9), 1.0)
    return measure_from_gram(ADVERSARIAL_GRAM, np.full(3, 1 / 3), grid,
                             kind="adversarial")


# ---------------------------------------------------------------------------
# Hierarchical tree measures
# ---------------------------------------------------------------------------

class TreeStructure:
    """Seed-independent part of a tree measure: geometry and level lookup."""

    def __init__(self, q: tuple, branching: int):
        k = len(q)
        B = branching
        m = B**k
        if m > ATOM_COUNT_GUARD:
            raise TooManyAtoms(f"B^k = {m} exceeds {ATOM_COUNT_GUARD}")
        self.q = tuple(q)
        self.B = B
        self.k = k
        self.m = m
        self.grid_levels = (0.0, *q)
        self.coefs = np.sqrt(np.diff(np.array([0.0, *q])))
        # leaf path digits, most significant first
        radix = B ** np.arange(k - 1, -1, -1, dtype=np.int64)
        leaves = np.arange(m, dtype=np.int64)
        self.digits = ((leaves[:, None] // radix[None, :]) % B).astype(np.int32)
        self.d = int((B ** np.arange(1, k + 1)).sum())
        self.norm_sq = float(np.sum(self.coefs**2))
        if m <= TABLE_CAP:
            eq = self.digits[:, None, :] == self.digits[None, :, :]
            self.table = (np.cumprod(eq, axis=2).sum(axis=2) + 1).astype(np.int16)
        else:
            self.table = None
        if m * self.d <= DENSE_ATOM_CAP:
            atoms = np.zeros((m, self.d))
            offset = 0
            for j in range(k):
                prefix = leaves // (B ** (k - 1 - j)) % (B ** (j + 1))
                atoms[leaves, offset + prefix] = self.coefs[j]
                offset += B ** (j + 1)
            self.atoms = atoms
        else:
            self.atoms = None


def tree_leaf_weights(structure: TreeStructure, zetas: tuple, seed: int) -> np.ndarray:
    """Leaf weights: path products of unnormalized power-law points,
    normalized once across all leaves.

    Global (not per-vertex) normalization is what makes the overlap array
    of the measure approach the replica identities as branching grows:
    the effective mass of a subtree is then biased by its own partition
    function, exactly as in the classical cascade. Each internal vertex
    gets its own derived seed stream keyed by (seed, level, vertex index),
    so the result is independent of traversal order.
    """
    B, k = structure.B, structure.k
    W = np.ones(1)
    for level in range(k):
        n_vertices = B**level
        child = np.empty((n_vertices, B))
        for v in range(n_vertices):
            child[v] = pd_points(zetas[level], B, rng_from(seed, level, v))
        W = (W[:, None] * child).ravel()
    return W / W.sum()


def _tree_level_probs(W: np.ndarray, digits: np.ndarray) -> np.ndarray:
    """Exact level probabilities for two independent leaves.

    Index j (0-based into the emitted grid) is the chance the leaves agree
    on exactly j path digits; the last index is the same-leaf collision
    mass. Computed as sums of cross products between sibling subtree
    masses: all terms are positive, so a dominant subtree cannot cancel a
    probability down to zero the way a difference of near-equal square
    sums would.
    """
    m, k = digits.shape
    B = int(digits[:, -1].max()) + 1
    probs = np.empty(k + 1)
    probs[k] = float(np.sum(W**2))
    child = W
    for j in range(k - 1, -1, -1):
        grp = child.reshape(B**j, B)
        csum = np.cumsum(grp, axis=1)
        probs[j] = 2.0 * float(np.sum(grp[:, 1:] * csum[:, :-1]))
        child = grp.sum(axis=1)
    return probs


def build_tree_measure(spec: TreeMeasureSpec,
                       structure: Optional[TreeStructure] = None) -> DiscreteMeasure:
    """Assemble the measure: geometry + seeded weights + emergent grid probs."""
    st = structure if structure is not None else TreeStructure(spec.q, spec.branching)
    W = tree_leaf_weights(st, spec.zetas, spec.seed)
    probs = _tree_level_probs(W, st.digits)
    grid = OverlapGrid(st.grid_levels, tuple(probs), st.grid_levels[-1])
    return DiscreteMeasure(
        W, grid, "tree", atoms=st.atoms, table=st.table, tree_digits=st.digits,
        norms_sq=np.full(st.m, st.norm_sq))
