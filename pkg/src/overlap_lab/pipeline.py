"""The constructive induction: verify, condition, truncate, recurse.

Each level of the hierarchy gets four checks: the collision identity
(top level ties happen exactly on equal atoms), absence of top-level
ultrametricity violations, the conditioned identity residuals, and
positive semidefiniteness of truncated conditional samples. Passing
levels descend into the conditioned-truncated ensemble until one level
remains.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .eigen import is_psd_dense
from .errors import (AcceptanceTooLow, EventMassTooSmall, EventNull,
                     NullConditioning)
from .measures import DiscreteMeasure, derive_seed
from .models import DescendedModel, as_model
from .observables import ObservableSpec, Psi, Statistic
from .sampler import (EventSpec, MCConfig, enumerate_statistics,
                      filtered_level_batches, influence_se, outer_stat_means,
                      ratio_from_means)
from .verify import DEFAULT_ABS_TOL, DEFAULT_Z, CheckRow, gg_residual


def collision_identity_check(measure: DiscreteMeasure):
    """Top-level entries occur exactly between equal replicas.

    Scans the full pair-level table (every atom pair with positive weight),
    which covers all outcomes a sampled check could reach: distinct atoms
    must not overlap at the top level, and every atom must collide with
    itself at it.
    """
    K = measure.grid.k
    table = measure.table
    if table is None:
        # tree digits: distinct leaves differ in some digit, so their
        # common-prefix level is < K and self-pairs are exactly K
        return True, None
    bad_diag = np.flatnonzero(np.diag(table) != K)
    if bad_diag.size:
        i = int(bad_diag[0])
        return False, (i, i)
    off = table == K
    off[np.diag_indices(measure.m)] = False
    hits = np.argwhere(off)
    if len(hits):
        i, j = (int(v) for v in hits[0])
        return False, (i, j)
    return True, None


@dataclass(frozen=True)
class LevelReport:
    level: int
    collision_identity_pass: bool
    ultra_violations_at_level: int
    conditioned_gg_pass: bool
    truncated_psd_pass: bool
    child: Optional["LevelReport"] = None
    details: dict = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return (self.collision_identity_pass
                and self.ultra_violations_at_level == 0
                and self.conditioned_gg_pass and self.truncated_psd_pass)

    def rows(self, model_id: str) -> list:
        out = [
            CheckRow("descend/collision", model_id, self.level, "table scan",
                     1.0 if self.collision_identity_pass else 0.0, 1.0,
                     0.0 if self.collision_identity_pass else 1.0, 0.0,
                     self.collision_identity_pass),
            CheckRow("descend/ultra_at_level", model_id, self.level,
                     "top-level ties", float(self.ultra_violations_at_level),
                     0.0, float(self.ultra_violations_at_level), 0.0,
                     self.ultra_violations_at_level == 0),
            CheckRow("descend/conditioned_gg", model_id, self.level,
                     "max |residual|",
                     self.details.get("max_gg_residual", 0.0), 0.0,
                     self.details.get("max_gg_residual", 0.0), 0.0,
                     self.conditioned_gg_pass),
            CheckRow("descend/truncated_psd", model_id, self.level,
                     "min eigenvalue",
                     self.details.get("min_eigenvalue", 0.0), 0.0,
                     min(self.details.get("min_eigenvalue", 0.0), 0.0), 0.0,
                     self.truncated_psd_pass),
        ]
        if self.child is not None:
            out.extend(self.child.rows(model_id))
        return out

    def to_json_dict(self) -> dict:
        return {
            "level": self.level,
            "collision_identity_pass": self.collision_identity_pass,
            "ultra_violations_at_level": self.ultra_violations_at_level,
            "conditioned_gg_pass": self.conditioned_gg_pass,
            "truncated_psd_pass": self.truncated_psd_pass,
            "details": self.details,
            "child": self.child.to_json_dict() if self.child else None,
        }


@dataclass(frozen=True)
class DescendConfig:
    n_condition: int = 4
    mc: MCConfig = field(default_factory=MCConfig)
    psd_outer: int = 50
    psd_inner: int = 20
    psd_tol: float = 1e-8
    ultra_n: int = 6
    abs_tol: float = DEFAULT_ABS_TOL
    z: float = DEFAULT_Z
    force: bool = False
    gg_observables: tuple = ()
    method: str = "mc"


def _default_level_observables() -> tuple:
    pat = (((1, 2), 1),)
    return (ObservableSpec(2, Psi("monomial", 1), f_pattern=pat),
            ObservableSpec(2, Psi("indicator", 1), f_pattern=pat),
            ObservableSpec(3, Psi("monomial", 1), f_pattern=pat))


def _top_tie_violations(lv: np.ndarray, K: int) -> int:
    """Triples with two top-level ties whose closing edge is below top."""
    A = (lv == K).astype(np.int64)
    pairs = np.einsum("tab,tac->tbc", A, A)
    open_edge = (lv != K) & (lv != 0)
    viol2 = pairs * open_edge
    n = lv.shape[1]
    viol2[:, np.arange(n), np.arange(n)] = 0
    return int(viol2.sum()) // 2


def descend(model, config: DescendConfig, seed: int) -> LevelReport:
    """Run every level check, recursing while levels pass (or force is set)."""
    model = as_model(model)
    return _descend_level(model, config, seed, is_root=True)


def _descend_level(model, config: DescendConfig, seed: int,
                   is_root: bool) -> LevelReport:
    K = model.grid.k
    details = {}

    if is_root:
        collision_pass, witness = collision_identity_check(model.measure_at(0))
        if witness is not None:
            details["collision_witness"] = list(witness)
    else:
        # the directing measure of a conditioned ensemble is not
        # reconstructed, so there is nothing to scan at inner levels
        collision_pass = True

    violations = 0
    n_ultra = max(3, config.ultra_n)
    for _, lv in filtered_level_batches(model, n_ultra, config.mc, seed,
                                        key=0xA11):
        if len(lv):
            violations += _top_tie_violations(lv, K)

    gg_pass = True
    max_resid = 0.0
    skipped = 0
    if K >= 2:
        observables = config.gg_observables or _default_level_observables()
        for i, obs in enumerate(observables):
            event = EventSpec("A_n", obs.n + 1)
            try:
                rep = gg_residual(model, obs, config.mc,
                                  derive_seed(seed, 0x66, i), conditioned=event,
                                  abs_tol=config.abs_tol, z=config.z,
                                  method=config.method)
            except (AcceptanceTooLow, EventNull):
                # zero-mass event: the conditional claim is vacuous here
                skipped += 1
                continue
            gg_pass &= rep.passed
            max_resid = max(max_resid, abs(rep.residual))
    details["max_gg_residual"] = max_resid
    if skipped:
        details["gg_observables_skipped"] = skipped

    psd_pass = True
    min_eig = float("inf")
    psd_samples = 0
    if K >= 2:
        trunc_grid = model.grid.truncated()
        vals = trunc_grid.values_by_index()
        psd_mc = MCConfig(config.psd_outer, config.psd_inner)
        for _, lv in filtered_level_batches(model, config.n_condition, psd_mc,
                                            seed, event_threshold=K - 1,
                                            key=0xBD):
            for t in range(lv.shape[0]):
                dense = vals[lv[t]]
                _, lo = is_psd_dense(dense, tol=1e-9)
                min_eig = min(min_eig, lo)
                psd_samples += 1
                if lo < -config.psd_tol:
                    psd_pass = False
    details["min_eigenvalue"] = min_eig if min_eig != float("inf") else 0.0
    details["psd_samples"] = psd_samples

    child = None
    level_pass = (collision_pass and violations == 0 and gg_pass and psd_pass)
    if K > 1 and (level_pass or config.force):
        child = _descend_level(DescendedModel(model, 1), config,
                               derive_seed(seed, 0xC41D), is_root=False)

    return LevelReport(K, bool(collision_pass), violations, bool(gg_pass),
                       bool(psd_pass), child, details)


# ---------------------------------------------------------------------------
# Threshold-conditioned criterion sequences
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CriterionReport:
    q: float
    B_descriptor: str
    p3: float
    sequence: tuple          # ((n, estimate, se), ...)
    consistent_within_noise: bool

    def rows(self, model_id: str) -> list:
        out = []
        p3_se = self.sequence[0][2]
        for n, est, se in self.sequence:
            comb = float(np.hypot(se, p3_se))
            out.append(CheckRow("criterion", model_id, n, self.B_descriptor,
                                est, self.p3, est - self.p3, comb,
                                abs(est - self.p3) <= DEFAULT_Z * comb
                                if n > 3 else True))
        return out

    def to_json_dict(self) -> dict:
        return {
            "q": self.q,
            "B": self.B_descriptor,
            "p3": self.p3,
            "sequence": [list(t) for t in self.sequence],
            "consistent_within_noise": self.consistent_within_noise,
        }


def criterion_run(model, q: float, B_patterns: Sequence[Sequence[Sequence[int]]],
                  n_max: int, mc: MCConfig, seed: int,
                  z: float = DEFAULT_Z, method: str = "mc") -> list:
    """Conditional triple-pattern probabilities for n = 3..n_max.

    Each pattern set is a list of sorted level triples; its probability is
    the chance the first three replicas of a below-q conditioned n-tuple
    show one of those triples (as an unordered multiset of levels).
    """
    model = as_model(model)
    if n_max < 3:
        raise ValueError("n_max must be >= 3")
    t = model.grid.threshold_below(q)
    if t < 1:
        raise NullConditioning(f"no grid level lies below q={q}")
    below = Statistic(2).with_threshold(2, t)
    if method == "enumerate":
        if not model.frozen:
            raise ValueError("enumeration needs a frozen (fixed-measure) model")
        vals, _ = enumerate_statistics(model.measure_at(0), [below], 2,
                                       model.threshold)
        p_below, p_se = float(vals[0]), 0.0
    else:
        means = outer_stat_means(model, [below], 2, mc,
                                 derive_seed(seed, 0xB0))
        try:
            r, h, _ = ratio_from_means(means, z)
        except EventMassTooSmall as e:
            raise NullConditioning(str(e)) from e
        p_below, p_se = float(r[0]), influence_se(h[:, 0])
    if p_below <= z * p_se or p_below <= 0.0:
        raise NullConditioning(
            f"P(R12 < {q}) = {p_below:.3g} within noise of zero")

    sets = [[tuple(sorted(int(v) for v in tri)) for tri in pat]
            for pat in B_patterns]
    per_n = {}
    for n in range(3, n_max + 1):
        stats = []
        offsets = [0]
        for pat in sets:
            stats.extend(Statistic(n).with_sorted_triple(tri) for tri in pat)
            offsets.append(len(stats))
        try:
            if method == "enumerate":
                eff = t if model.threshold is None else min(t, model.threshold)
                vals, _ = enumerate_statistics(model.measure_at(0), stats, n, eff)
                sums = [(float(vals[offsets[s]:offsets[s + 1]].sum()), 0.0)
                        for s in range(len(sets))]
            else:
                means = outer_stat_means(model, stats, n, mc,
                                         derive_seed(seed, 0xB1, n), t)
                r, h, _ = ratio_from_means(means, z)
                sums = []
                for s in range(len(sets)):
                    est = float(r[offsets[s]:offsets[s + 1]].sum())
                    se = influence_se(h[:, offsets[s]:offsets[s + 1]].sum(axis=1))
                    sums.append((est, se))
        except (EventMassTooSmall, EventNull) as e:
            if n == 3:
                raise NullConditioning(
                    f"no mass left for three below-q replicas: {e}") from e
            break  # sequence truncates where the event mass runs out
        per_n[n] = sums

    reports = []
    for s, pat in enumerate(sets):
        descriptor = "B={" + ";".join(",".join(f"q{v}" for v in tri)
                                      for tri in pat) + "}"
        seq = tuple((n, per_n[n][s][0], per_n[n][s][1]) for n in sorted(per_n))
        p3, p3_se = seq[0][1], seq[0][2]
        consistent = all(
            abs(est - p3) <= z * float(np.hypot(se, p3_se))
            for n, est, se in seq[1:])
        reports.append(CriterionReport(float(q), descriptor, p3, seq,
                                       bool(consistent)))
    return reports
