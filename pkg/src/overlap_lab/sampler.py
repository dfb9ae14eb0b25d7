"""Replica sampling, conditional rejection draws, and the exact enumeration oracle.

Expectations are nested: an outer average over independently drawn
measures and an inner average over i.i.d. replica tuples from each.
Standard errors always come from the outer replication level, treating
each drawn measure as one observation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import _kernels
from .errors import AcceptanceTooLow, EventMassTooSmall, EventNull, TooLarge
from .grid import LevelMatrix, OverlapGrid
from .measures import DiscreteMeasure, rng_from
from .models import as_model
from .observables import Statistic, pack_statistics

ENUM_GUARD = 10**7
DEFAULT_MAX_ATTEMPTS = 10**6

_INNER_KEY = 0x1A7E


@dataclass(frozen=True)
class EventSpec:
    """Distinctness (A_n) or below-threshold (A_nq) event on an n-tuple."""

    kind: str                 # "A_n" | "A_nq"
    n: int
    q: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("A_n", "A_nq"):
            raise ValueError(f"unknown event kind {self.kind!r}")
        if self.n < 2:
            raise ValueError("events need n >= 2")
        if self.kind == "A_nq" and self.q is None:
            raise ValueError("A_nq needs a threshold q")

    def threshold(self, grid: OverlapGrid) -> int:
        """Largest admissible level index; 0 means the event is impossible."""
        if self.kind == "A_n":
            return grid.k - 1
        return grid.threshold_below(self.q)

    def label(self) -> str:
        return f"A_{self.n}" if self.kind == "A_n" else f"A_{self.n},q<{self.q:g}"


@dataclass(frozen=True)
class ReplicaDraw:
    atom_indices: tuple
    matrix: LevelMatrix


@dataclass(frozen=True)
class EstimateReport:
    estimate: float
    std_error: float
    inner_samples: int
    outer_samples: int
    acceptance_rate: Optional[float] = None


@dataclass(frozen=True)
class MCConfig:
    """Sample sizes for one nested estimate."""

    outer: int = 200
    inner: int = 100

    def __post_init__(self):
        if self.outer < 1 or self.inner < 1:
            raise ValueError("sample sizes must be >= 1")


def combined_threshold(model, event_threshold: Optional[int]) -> Optional[int]:
    parts = [t for t in (model.threshold, event_threshold) if t is not None]
    return min(parts) if parts else None


def _accept(measure: DiscreteMeasure, idx: np.ndarray, threshold: int) -> np.ndarray:
    if measure.table is not None:
        return _kernels.accept_mask(idx, measure.table, threshold)
    lv = measure.levels_from_indices(idx)
    n = idx.shape[1]
    iu, ju = np.triu_indices(n, k=1)
    return (lv[:, iu, ju] <= threshold).all(axis=1)


def draw_index_batch(measure: DiscreteMeasure, n: int, count: int,
                     rng: np.random.Generator,
                     threshold: Optional[int] = None,
                     max_attempts: int = DEFAULT_MAX_ATTEMPTS,
                     allow_partial: bool = False):
    """(count, n) atom indices and the number of candidate tuples consumed.

    With a threshold the batch is rejection-sampled: redraw until every
    pairwise level of the tuple is <= threshold, which realizes the
    conditional law of the event for this fixed measure exactly. With
    allow_partial, exhausting the attempt budget returns the accepted
    prefix instead of raising.
    """
    if threshold is None:
        return measure.sample_indices(n, count, rng), count
    if threshold < 1:
        if allow_partial:
            return np.empty((0, n), dtype=np.int64), 0
        raise AcceptanceTooLow("conditioning event is impossible on this grid")
    chunks = [np.empty((0, n), dtype=np.int64)]
    got = 0
    attempts = 0
    batch = max(2 * count, 64)
    while got < count:
        if attempts >= max_attempts:
            if allow_partial:
                break
            raise AcceptanceTooLow(
                f"{got}/{count} acceptances in {max_attempts} attempts "
                f"for threshold {threshold}")
        size = int(min(batch, max_attempts - attempts))
        cand = measure.sample_indices(n, size, rng)
        mask = _accept(measure, cand, threshold)
        hits = cand[mask]
        attempts += size
        if len(hits):
            chunks.append(hits[: count - got])
            got += len(chunks[-1])
        rate = max(got / attempts, 1.0 / attempts)
        batch = int(min(max((count - got) / rate * 1.2, 64), 1_000_000))
    return np.concatenate(chunks), attempts


def draw_replicas(measure: DiscreteMeasure, n: int, seed) -> ReplicaDraw:
    """One i.i.d. replica n-tuple and its induced level matrix."""
    rng = seed if isinstance(seed, np.random.Generator) else rng_from(seed)
    idx, _ = draw_index_batch(measure, n, 1, rng)
    lv = measure.levels_from_indices(idx)[0]
    return ReplicaDraw(tuple(int(i) for i in idx[0]), LevelMatrix(lv, measure.grid))


def conditional_draw(measure: DiscreteMeasure, event: EventSpec, seed,
                     max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> ReplicaDraw:
    """One replica tuple drawn conditionally on the event, by rejection."""
    rng = seed if isinstance(seed, np.random.Generator) else rng_from(seed)
    t = event.threshold(measure.grid)
    idx, _ = draw_index_batch(measure, event.n, 1, rng, threshold=t,
                              max_attempts=max_attempts)
    lv = measure.levels_from_indices(idx)[0]
    return ReplicaDraw(tuple(int(i) for i in idx[0]), LevelMatrix(lv, measure.grid))


def outer_stat_means(model, stats: Sequence[Statistic], n: int, mc: MCConfig,
                     seed: int, event_threshold: Optional[int] = None):
    """Per-outer-draw inner means; the last column is the event indicator.

    Conditional expectations are ratios of unconditioned expectations, so
    every statistic is multiplied by the indicator of the combined event
    (model conditioning and the explicit threshold), and the indicator
    itself is appended as the denominator column. Without any conditioning
    the denominator column is identically one.

    Each outer draw gets its own measure and a derived inner seed stream,
    so results do not depend on evaluation order or parallelism.
    """
    model = as_model(model)
    threshold = combined_threshold(model, event_threshold)
    if threshold is None:
        cols = list(stats) + [Statistic(n)]
    else:
        cols = [s.with_threshold(n, threshold) for s in stats]
        cols.append(Statistic(n).with_threshold(n, threshold))
    pack = pack_statistics(cols)
    means = np.empty((mc.outer, len(cols)))
    for j in range(mc.outer):
        measure = model.measure_at(j)
        rng = rng_from(seed, _INNER_KEY, j)
        idx = measure.sample_indices(n, mc.inner, rng)
        lv = measure.levels_from_indices(idx)
        vals = measure.grid.values_by_index()
        means[j] = _kernels.eval_stats(np.ascontiguousarray(lv), vals, pack).mean(axis=0)
    return means


def mean_and_se(per_outer: np.ndarray):
    m = len(per_outer)
    est = float(np.mean(per_outer))
    se = float(np.std(per_outer, ddof=1) / np.sqrt(m)) if m > 1 else 0.0
    return est, se


def ratio_from_means(means: np.ndarray, z: float = 3.0,
                     require_positive: bool = True):
    """Conditional estimates from an indicator-augmented means matrix.

    Returns (ratios (S,), per-outer influence values (M, S), denominator
    mean). The influence values linearize each ratio around the means, so
    column standard deviations over sqrt(M) are delta-method standard
    errors. Raises when the event mass is statistically indistinguishable
    from zero.
    """
    D = means[:, -1]
    dbar, dse = mean_and_se(D)
    if require_positive and (dbar <= 0.0 or dbar <= z * dse):
        raise EventMassTooSmall(
            f"event mass {dbar:.3g} (se {dse:.3g}) too close to zero")
    N = means[:, :-1]
    r = N.mean(axis=0) / dbar
    h = (N - np.outer(D, r)) / dbar
    return r, h, dbar


def influence_se(h: np.ndarray) -> float:
    m = len(h)
    return float(np.std(h, ddof=1) / np.sqrt(m)) if m > 1 else 0.0


def estimate_expectation(model, stat, n: int, mc: MCConfig, seed: int,
                         event: Optional[EventSpec] = None) -> EstimateReport:
    """Nested Monte Carlo estimate of E<stat> or E<stat | event>.

    The conditional form is the ratio E<stat * I_event> / E<I_event>;
    acceptance_rate reports the estimated event mass. stat is a Statistic
    or any callable on LevelMatrix; callables take the slow per-draw path.
    """
    model = as_model(model)
    t = event.threshold(model.grid) if event is not None else None
    conditioned = combined_threshold(model, t) is not None
    if isinstance(stat, Statistic):
        means = outer_stat_means(model, [stat], n, mc, seed, t)
    else:
        threshold = combined_threshold(model, t)
        means = np.empty((mc.outer, 2))
        for j in range(mc.outer):
            measure = model.measure_at(j)
            rng = rng_from(seed, _INNER_KEY, j)
            idx = measure.sample_indices(n, mc.inner, rng)
            lv = measure.levels_from_indices(idx)
            ind = np.ones(mc.inner)
            if threshold is not None:
                iu, ju = np.triu_indices(n, k=1)
                ind = (lv[:, iu, ju] <= threshold).all(axis=1).astype(np.float64)
            svals = np.zeros(mc.inner)
            for t_ in range(mc.inner):
                if ind[t_]:  # rejected draws can fall outside a descended grid
                    svals[t_] = stat(LevelMatrix(lv[t_], model.grid))
            means[j] = [(svals * ind).mean(), ind.mean()]
    if not conditioned:
        est, se = mean_and_se(means[:, 0])
        return EstimateReport(est, se, mc.inner, mc.outer, None)
    r, h, dbar = ratio_from_means(means)
    return EstimateReport(float(r[0]), influence_se(h[:, 0]), mc.inner,
                          mc.outer, float(dbar))


def filtered_level_batches(model, n: int, mc: MCConfig, seed: int,
                           event_threshold: Optional[int] = None,
                           key: int = _INNER_KEY):
    """Yield per-outer (measure, accepted level batch) pairs.

    Candidates failing the combined conditioning are dropped rather than
    redrawn: every yielded matrix lies in the conditional support, which
    is all that support-style checks (PSD, triple scans) need.
    """
    model = as_model(model)
    threshold = combined_threshold(model, event_threshold)
    iu = ju = None
    for j in range(mc.outer):
        measure = model.measure_at(j)
        rng = rng_from(seed, key, j)
        idx = measure.sample_indices(n, mc.inner, rng)
        lv = measure.levels_from_indices(idx)
        if threshold is not None:
            if iu is None:
                iu, ju = np.triu_indices(n, k=1)
            mask = (lv[:, iu, ju] <= threshold).all(axis=1)
            lv = lv[mask]
        yield measure, lv


# ---------------------------------------------------------------------------
# Exact enumeration for fixed measures
# ---------------------------------------------------------------------------

def _enum_guard(measure: DiscreteMeasure, n: int):
    if measure.m**n > ENUM_GUARD:
        raise TooLarge(f"{measure.m}^{n} tuples exceed the enumeration guard")


def enumerate_statistics(measure: DiscreteMeasure, stats: Sequence[Statistic],
                         n: int, event_threshold: Optional[int] = None):
    """Exact conditional averages <stat | event> and the event mass."""
    _enum_guard(measure, n)
    table = measure.require_table()
    t = -1 if event_threshold is None else int(event_threshold)
    vals = measure.grid.values_by_index()
    pack = pack_statistics(stats)
    mass, sums = _kernels.enum_stats(measure.weights, table, n, t, vals, pack)
    if mass <= 0.0:
        raise EventNull("conditioning event has zero mass")
    return sums / mass, float(mass)


def enumerate_statistic(measure: DiscreteMeasure,
                        stat: Union[Statistic, Callable], n: int,
                        event: Optional[EventSpec] = None) -> float:
    """Exact <stat> or <stat | event> for one fixed measure."""
    t = event.threshold(measure.grid) if event is not None else None
    if isinstance(stat, Statistic):
        out, _ = enumerate_statistics(measure, [stat], n, t)
        return float(out[0])
    _enum_guard(measure, n)
    table = measure.require_table()
    m = measure.m
    total = 0.0
    mass = 0.0
    idx = np.zeros(n, dtype=np.int64)
    iu, ju = np.triu_indices(n, k=1)
    while True:
        lv = table[np.ix_(idx, idx)].astype(np.int16)
        lv[np.diag_indices(n)] = 0
        ok = t is None or (lv[iu, ju] <= t).all()
        if ok:
            w = float(np.prod(measure.weights[idx]))
            mass += w
            total += w * float(stat(LevelMatrix(lv, measure.grid)))
        pos = n - 1
        while pos >= 0 and idx[pos] == m - 1:
            idx[pos] = 0
            pos -= 1
        if pos < 0:
            break
        idx[pos] += 1
    if mass <= 0.0:
        raise EventNull("conditioning event has zero mass")
    return total / mass


def enumerate_matrix_law(measure: DiscreteMeasure, n: int,
                         event_threshold: Optional[int] = None) -> dict:
    """Exact (conditional) law of the off-diagonal level tuple.

    Keys are row-major upper-triangle level tuples; values sum to one.
    """
    _enum_guard(measure, n)
    table = measure.require_table()
    t = -1 if event_threshold is None else int(event_threshold)
    k = measure.grid.k
    mass = _kernels.enum_law(measure.weights, table, n, t, k)
    total = float(mass.sum())
    if total <= 0.0:
        raise EventNull("conditioning event has zero mass")
    n_pos = n * (n - 1) // 2
    base = k + 1
    out = {}
    for key in np.nonzero(mass)[0]:
        digits = []
        rem = int(key)
        for _ in range(n_pos):
            digits.append(rem % base)
            rem //= base
        out[tuple(digits)] = float(mass[key]) / total
    return out


def empirical_matrix_law(measure: DiscreteMeasure, n: int, draws: int, seed,
                         event_threshold: Optional[int] = None,
                         max_attempts: int = 10**8) -> dict:
    """Empirical counterpart of enumerate_matrix_law from (conditional) draws."""
    rng = seed if isinstance(seed, np.random.Generator) else rng_from(seed)
    idx, _ = draw_index_batch(measure, n, draws, rng, event_threshold,
                              max_attempts)
    lv = measure.levels_from_indices(idx)
    iu, ju = np.triu_indices(n, k=1)
    flat = lv[:, iu, ju]
    keys, counts = np.unique(flat, axis=0, return_counts=True)
    return {tuple(int(v) for v in row): c / draws for row, c in zip(keys, counts)}


def total_variation(law_a: dict, law_b: dict) -> float:
    keys = set(law_a) | set(law_b)
    return 0.5 * sum(abs(law_a.get(k, 0.0) - law_b.get(k, 0.0)) for k in keys)
