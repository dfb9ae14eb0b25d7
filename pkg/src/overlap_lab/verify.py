"""Residual estimators for every identity the overlap laboratory checks.

Conditional expectations are always estimated as ratios of unconditioned
expectations (the event indicator multiplies the statistic and supplies
the denominator), with delta-method standard errors computed from outer-
level influence values. This matches the definition of the conditional
laws and keeps structurally-zero residuals exactly zero on paired draws.

Tolerance policy:
  * identity residuals (gg):        pass iff |r| <= max(abs_tol, z * se)
  * reference comparisons (rest):   pass iff |r| <= z * se + abs_tol

abs_tol defaults to 0.01 for statistical runs (it absorbs the finite-
branching bias of the hierarchical positive controls) and should be set
to ~1e-12 when the exact enumeration path is used.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import AcceptanceTooLow, EventMassTooSmall, GridTooSmall
from .grid import check_ultrametric_batch
from .measures import DiscreteMeasure, derive_seed
from .models import as_model
from .observables import ObservableSpec, Statistic, statistic_for_f
from .sampler import (EstimateReport, EventSpec, MCConfig, combined_threshold,
                      enumerate_statistics, filtered_level_batches,
                      influence_se, mean_and_se, outer_stat_means,
                      ratio_from_means)

DEFAULT_ABS_TOL = 0.01
EXACT_ABS_TOL = 1e-12
DEFAULT_Z = 3.0


@dataclass(frozen=True)
class CheckRow:
    """One line of the long-format report CSV."""

    check: str
    model_id: str
    n: Optional[int]
    observable_id: str
    estimate: float
    reference: float
    residual: float
    se: float
    passed: bool


@dataclass(frozen=True)
class ResidualReport:
    lhs: EstimateReport
    rhs_terms: tuple
    residual: float
    residual_se: float
    passed: bool
    abs_tol: float
    z: float
    observable_id: str = ""
    model_id: str = ""
    conditioned: str = ""
    n: Optional[int] = None

    def row(self, check: str = "gg") -> CheckRow:
        rhs_total = sum(t.estimate for t in self.rhs_terms)
        return CheckRow(check, self.model_id, self.n, self.observable_id,
                        self.lhs.estimate, rhs_total, self.residual,
                        self.residual_se, self.passed)


def _as_f_statistic(f, n: int) -> Statistic:
    if f is None:
        return Statistic(n)
    if isinstance(f, ObservableSpec):
        return statistic_for_f(f)
    if isinstance(f, Statistic):
        return f.copy()
    raise TypeError("f must be a Statistic, an ObservableSpec, or None")


def _estimates(model, stats, n, mc, seed, event_threshold, method):
    """Indicator-augmented outer means, or exact one-row equivalents.

    The exact path enumerates conditional values directly, so it reports
    them over a unit denominator; the event mass is returned separately.
    """
    model = as_model(model)
    if method == "enumerate":
        if not model.frozen:
            raise ValueError("enumeration needs a frozen (fixed-measure) model")
        t = combined_threshold(model, event_threshold)
        vals, mass = enumerate_statistics(model.measure_at(0), stats, n, t)
        means = np.concatenate([vals, [1.0]])[None, :]
        return means, (mass if t is not None else None)
    return outer_stat_means(model, stats, n, mc, seed, event_threshold), None


def gg_residual(model, obs: ObservableSpec, mc: MCConfig, seed: int,
                conditioned: Optional[EventSpec] = None,
                abs_tol: float = DEFAULT_ABS_TOL, z: float = DEFAULT_Z,
                method: str = "mc") -> ResidualReport:
    """Residual of the cavity identity for one observable.

    lhs  = E<f(R^n) psi(R_{1,n+1})>
    rhs  = (1/n) E<f> E<psi(R_{1,2})> + (1/n) sum_{l=2..n} E<f psi(R_{1,l})>

    All groups are estimated on the same (n+1)-replica draws so that
    degenerate single-level models give an exactly zero residual. With
    `conditioned`, every group becomes the corresponding conditional
    expectation; the event must cover the full tuple
    (conditioned.n == obs.n + 1).
    """
    model = as_model(model)
    n = obs.n
    event_threshold = None
    cond_label = ""
    if conditioned is not None:
        if conditioned.n != n + 1:
            raise ValueError("conditioning event must cover all n+1 replicas")
        event_threshold = conditioned.threshold(model.grid)
        cond_label = conditioned.label()
    f_stat = statistic_for_f(obs)
    stats = [
        f_stat.with_psi(obs.psi, 0, n),           # lhs
        f_stat,                                    # E<f>
        Statistic(n + 1).with_psi(obs.psi, 0, 1),  # E<psi(R12)>
    ]
    stats += [f_stat.with_psi(obs.psi, 0, l) for l in range(1, n)]
    means, exact_mass = _estimates(model, stats, n + 1, mc, seed,
                                   event_threshold, method)
    try:
        r, h, dbar = ratio_from_means(means, z)
    except EventMassTooSmall as e:
        raise AcceptanceTooLow(str(e)) from e
    M = means.shape[0]
    residual = float(r[0] - (r[1] * r[2]) / n - r[3:].sum() / n)
    h_resid = h[:, 0] - (r[2] * h[:, 1] + r[1] * h[:, 2]) / n \
        - h[:, 3:].sum(axis=1) / n
    se = influence_se(h_resid)
    conditioned_draws = combined_threshold(model, event_threshold) is not None
    rate = exact_mass if exact_mass is not None else (
        float(dbar) if conditioned_draws else None)
    inner = mc.inner if method != "enumerate" else 0
    lhs = EstimateReport(float(r[0]), influence_se(h[:, 0]), inner, M, rate)
    prod_h = (r[2] * h[:, 1] + r[1] * h[:, 2]) / n
    rhs = [EstimateReport(float(r[1] * r[2] / n), influence_se(prod_h),
                          inner, M, rate)]
    rhs += [EstimateReport(float(r[3 + i] / n), influence_se(h[:, 3 + i]) / n,
                           inner, M, rate) for i in range(n - 1)]
    passed = abs(residual) <= max(abs_tol, z * se)
    return ResidualReport(lhs, tuple(rhs), residual, se, bool(passed),
                          abs_tol, z, obs.observable_id(), model.model_id,
                          cond_label, n)


@dataclass(frozen=True)
class MassReport:
    rows: tuple
    p_top: float
    passed: bool


def distinct_mass_check(model, n_max: int, mc: MCConfig, seed: int,
                        abs_tol: float = DEFAULT_ABS_TOL, z: float = DEFAULT_Z,
                        method: str = "mc") -> MassReport:
    """E<I(no top-level ties among n replicas)> against (1 - p_top)^(n-1)."""
    model = as_model(model)
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    K = model.grid.k
    stats = [Statistic(n_max).with_threshold(j, K - 1) for j in range(2, n_max + 1)]
    stats.append(Statistic(n_max).with_pattern(0, 1, K))
    means, _ = _estimates(model, stats, n_max, mc, seed, None, method)
    r, h, _ = ratio_from_means(means, z)
    pbar = float(r[-1])
    rows = []
    all_pass = True
    for i, n in enumerate(range(2, n_max + 1)):
        abar = float(r[i])
        ref = (1.0 - pbar) ** (n - 1)
        residual = abar - ref
        h_resid = h[:, i] + (n - 1) * (1.0 - pbar) ** (n - 2) * h[:, -1]
        se = influence_se(h_resid)
        passed = abs(residual) <= z * se + abs_tol
        all_pass &= passed
        rows.append(CheckRow("mass", model.model_id, n, f"A_{n}",
                             abar, ref, float(residual), se, bool(passed)))
    return MassReport(tuple(rows), pbar, bool(all_pass))


def lemma1_check(model, f, n: int, mc: MCConfig, seed: int,
                 abs_tol: float = DEFAULT_ABS_TOL, z: float = DEFAULT_Z,
                 method: str = "mc") -> ResidualReport:
    """E<f I(distinct among n+1)> - (1 - p_top) E<f I(distinct among n)>."""
    model = as_model(model)
    K = model.grid.k
    f_stat = _as_f_statistic(f, n)
    stats = [
        f_stat.with_threshold(n + 1, K - 1),
        f_stat.with_threshold(n, K - 1),
        Statistic(n + 1).with_pattern(0, 1, K),
    ]
    means, _ = _estimates(model, stats, n + 1, mc, seed, None, method)
    r, h, _ = ratio_from_means(means, z)
    ubar, vbar, pbar = (float(v) for v in r)
    residual = ubar - (1.0 - pbar) * vbar
    h_resid = h[:, 0] - (1.0 - pbar) * h[:, 1] + vbar * h[:, 2]
    se = influence_se(h_resid)
    M = means.shape[0]
    inner = mc.inner if method != "enumerate" else 0
    lhs = EstimateReport(ubar, influence_se(h[:, 0]), inner, M, None)
    rhs = (EstimateReport((1.0 - pbar) * vbar, influence_se(h[:, 1]), inner,
                          M, None),)
    passed = abs(residual) <= z * se + abs_tol
    return ResidualReport(lhs, rhs, float(residual), se, bool(passed), abs_tol,
                          z, f"lemma1:n={n}", model.model_id, "", n)


def consistency_check(model, f, n: int, mc: MCConfig, seed: int,
                      abs_tol: float = DEFAULT_ABS_TOL, z: float = DEFAULT_Z,
                      method: str = "mc") -> ResidualReport:
    """Conditional expectations of f under distinctness at sizes n+1 and n."""
    model = as_model(model)
    K = model.grid.k
    f_stat = _as_f_statistic(f, n)
    stats = [
        f_stat.with_threshold(n + 1, K - 1),
        Statistic(n + 1).with_threshold(n + 1, K - 1),
        f_stat.with_threshold(n, K - 1),
        Statistic(n + 1).with_threshold(n, K - 1),
    ]
    means, _ = _estimates(model, stats, n + 1, mc, seed, None, method)
    r, h, _ = ratio_from_means(means, z)
    ubar, abar, vbar, bbar = (float(v) for v in r)
    se_a = influence_se(h[:, 1])
    se_b = influence_se(h[:, 3])
    M = means.shape[0]
    if abar <= 0.0 or bbar <= 0.0 or (M > 1 and (abar <= z * se_a
                                                 or bbar <= z * se_b)):
        raise EventMassTooSmall(
            f"event masses {abar:.3g}, {bbar:.3g} too close to zero")
    r1 = ubar / abar
    r2 = vbar / bbar
    residual = r1 - r2
    h_resid = (h[:, 0] - r1 * h[:, 1]) / abar - (h[:, 2] - r2 * h[:, 3]) / bbar
    se = influence_se(h_resid)
    inner = mc.inner if method != "enumerate" else 0
    lhs = EstimateReport(r1, 0.0, inner, M, abar)
    rhs = (EstimateReport(r2, 0.0, inner, M, bbar),)
    passed = abs(residual) <= z * se + abs_tol
    return ResidualReport(lhs, rhs, float(residual), se, bool(passed), abs_tol,
                          z, f"consistency:n={n}", model.model_id, "", n)


@dataclass(frozen=True)
class MarginalReport:
    rows: tuple
    acceptance_rate: Optional[float]
    passed: bool


def conditional_marginal_check(model, mc: MCConfig, seed: int,
                               abs_tol: float = DEFAULT_ABS_TOL,
                               z: float = DEFAULT_Z,
                               method: str = "mc") -> MarginalReport:
    """Distinct-pair level frequencies against p_l / (1 - p_top).

    The conditional side keeps only accepted (tie-free) pairs from its own
    draw stream; the reference side estimates the level probabilities on
    an independent stream, so the comparison exercises the conditioning
    machinery instead of reducing to an algebraic identity.
    """
    model = as_model(model)
    K = model.grid.k
    if K < 2:
        raise GridTooSmall("conditional marginal needs at least two levels")
    cond_stats = [Statistic(2).with_pattern(0, 1, l) for l in range(1, K)]
    full_stats = [Statistic(2).with_pattern(0, 1, l) for l in range(1, K + 1)]
    cond_means, cond_mass = _estimates(model, cond_stats, 2, mc,
                                       derive_seed(seed, 1), K - 1, method)
    full_means, _ = _estimates(model, full_stats, 2, mc,
                               derive_seed(seed, 2), None, method)
    rc, hc, dbar = ratio_from_means(cond_means, z)
    rf, hf, _ = ratio_from_means(full_means, z)
    ptop = float(rf[-1])
    rate = cond_mass if cond_mass is not None else float(dbar)
    rows = []
    all_pass = True
    for i, l in enumerate(range(1, K)):
        freq = float(rc[i])
        pl = float(rf[i])
        ref = pl / (1.0 - ptop)
        residual = freq - ref
        g = hf[:, i] / (1.0 - ptop) + pl * hf[:, -1] / (1.0 - ptop) ** 2
        se = float(np.hypot(influence_se(hc[:, i]), influence_se(g)))
        passed = abs(residual) <= z * se + abs_tol
        all_pass &= passed
        rows.append(CheckRow("marginal", model.model_id, 2, f"P(Q12=q{l})",
                             freq, ref, float(residual), se, bool(passed)))
    return MarginalReport(tuple(rows), rate, bool(all_pass))


@dataclass(frozen=True)
class SupportReport:
    max_deviation: float
    atoms_checked: int
    passed: bool

    def row(self, model_id: str) -> CheckRow:
        return CheckRow("support", model_id, None, "norm_sq-q_top",
                        self.max_deviation, 0.0, self.max_deviation, 0.0,
                        self.passed)


def support_check(measure: DiscreteMeasure, weight_floor: float = 1e-12,
                  tol: float = 1e-10) -> SupportReport:
    """Max deviation of atom squared norms from the top grid level."""
    mask = measure.weights > weight_floor
    dev = np.abs(measure.norms_sq[mask] - measure.grid.levels[-1])
    max_dev = float(dev.max()) if dev.size else 0.0
    return SupportReport(max_dev, int(mask.sum()), bool(max_dev <= tol))


@dataclass(frozen=True)
class PositivityReport:
    min_overlap: float
    levels_observed: tuple
    passed: bool

    def row(self, model_id: str) -> CheckRow:
        return CheckRow("positivity", model_id, 2, "min R12",
                        self.min_overlap, 0.0, min(self.min_overlap, 0.0),
                        0.0, self.passed)


def positivity_check(model, mc: MCConfig, seed: int,
                     tol: float = 1e-12) -> PositivityReport:
    """Minimum sampled two-replica overlap across all draws."""
    model = as_model(model)
    K = model.grid.k
    counts = np.zeros(K + 1, dtype=np.int64)
    values = None
    for measure, lv in filtered_level_batches(model, 2, mc, seed, key=0x90F):
        if len(lv):
            counts += np.bincount(lv[:, 0, 1], minlength=K + 1)
        if values is None:
            values = measure.grid.values_by_index()
    observed = [l for l in range(1, K + 1) if counts[l] > 0]
    if not observed:
        raise EventMassTooSmall("no pairs observed")
    min_overlap = float(min(values[l] for l in observed))
    return PositivityReport(min_overlap, tuple(observed),
                            bool(min_overlap >= -tol))


@dataclass(frozen=True)
class UltraReport:
    triples_checked: int
    violations: int
    rate: float
    rate_se: float
    first_witness: Optional[tuple]
    passed: bool

    def row(self, model_id: str) -> CheckRow:
        return CheckRow("ultra", model_id, None, "triple min unique",
                        self.rate, 0.0, self.rate, self.rate_se,
                        self.passed)


def ultrametricity_check(model, mc: MCConfig, seed: int,
                         n: int = 8) -> UltraReport:
    """Triple violations over sampled matrices; passes only at zero."""
    model = as_model(model)
    total = 0
    bad = 0
    witness = None
    rates = []
    for _, lv in filtered_level_batches(model, n, mc, seed, key=0x3B1):
        if not len(lv):
            continue
        rep = check_ultrametric_batch(lv)
        total += rep.triples_checked
        bad += rep.violations
        rates.append(rep.violations / rep.triples_checked)
        if witness is None and rep.first_witness is not None:
            witness = rep.first_witness
    if total == 0:
        raise EventMassTooSmall("no matrices available for the triple scan")
    rate, rate_se = mean_and_se(np.asarray(rates))
    return UltraReport(total, bad, rate, rate_se, witness, bad == 0)
