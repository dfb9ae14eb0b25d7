import numpy as np
import pytest

from overlap_lab.errors import (AcceptanceTooLow, EventNull, OffGridOverlap,
                                TooLarge)
from overlap_lab.grid import OverlapGrid
from overlap_lab.measures import (TreeMeasureSpec, adversarial_measure,
                                  build_tree_measure, explicit_measure,
                                  measure_from_gram)
from overlap_lab.models import DescendedModel, FrozenModel, TreeModel
from overlap_lab.observables import Statistic
from overlap_lab.sampler import (EventSpec, MCConfig, conditional_draw,
                                 draw_index_batch, draw_replicas,
                                 empirical_matrix_law, enumerate_matrix_law,
                                 enumerate_statistic, estimate_expectation,
                                 outer_stat_means, ratio_from_means,
                                 total_variation)


def single_atom():
    g = OverlapGrid((0.7,), (1.0,), 0.7)
    return explicit_measure([[np.sqrt(0.7)]], [1.0], g)


def two_orthogonal(w0=0.5):
    g = OverlapGrid((0.0, 0.7), None, 0.7)
    a = np.sqrt(0.7)
    return explicit_measure([[a, 0.0], [0.0, a]], [w0, 1.0 - w0], g,
                            on_sphere=False)


def three_atoms(weights=(1 / 3, 1 / 3, 1 / 3)):
    gram = np.array([[0.7, 0.3, 0.3], [0.3, 0.7, 0.3], [0.3, 0.3, 0.7]])
    g = OverlapGrid((0.3, 0.7), None, 0.7)
    return measure_from_gram(gram, np.array(weights), g)


class TestDrawReplicas:
    def test_single_atom_all_top(self):
        d = draw_replicas(single_atom(), 3, seed=1)
        off = d.matrix.entries[np.triu_indices(3, 1)]
        assert (off == 1).all()
        assert d.atom_indices == (0, 0, 0)

    def test_deterministic(self):
        m = three_atoms()
        a = draw_replicas(m, 4, seed=9)
        b = draw_replicas(m, 4, seed=9)
        assert a.atom_indices == b.atom_indices

    def test_collision_probability(self):
        m = two_orthogonal(0.3)
        rng = np.random.default_rng(2)
        n_pairs = 100_000
        idx = m.sample_indices(2, n_pairs, rng)
        p_hat = np.mean(idx[:, 0] == idx[:, 1])
        p = 0.3**2 + 0.7**2
        se = np.sqrt(p * (1 - p) / n_pairs)
        assert abs(p_hat - p) <= 3 * se

    def test_matrix_matches_indices(self):
        m = three_atoms()
        d = draw_replicas(m, 5, seed=3)
        for a in range(5):
            for b in range(a + 1, 5):
                i, j = d.atom_indices[a], d.atom_indices[b]
                assert d.matrix.entries[a, b] == m.pair_level(i, j)

    def test_off_grid_draw_raises(self):
        g = OverlapGrid((1.0,), None, 1.0)
        atoms = np.array([[1.0, 0.0], [0.6, 0.8]])  # inner product 0.6 off grid
        m = explicit_measure(atoms, [0.5, 0.5], g, on_sphere=False)
        with pytest.raises(OffGridOverlap):
            for seed in range(50):
                draw_replicas(m, 2, seed=seed)


class TestConditionalDraw:
    def test_distinct_event(self):
        m = three_atoms()
        for seed in range(10):
            d = conditional_draw(m, EventSpec("A_n", 3), seed=seed)
            assert len(set(d.atom_indices)) == 3

    def test_impossible_event(self):
        with pytest.raises(AcceptanceTooLow):
            conditional_draw(single_atom(), EventSpec("A_n", 2), seed=1,
                             max_attempts=1000)

    def test_below_threshold_event(self):
        m = three_atoms()
        for seed in range(10):
            d = conditional_draw(m, EventSpec("A_nq", 3, q=0.5), seed=seed)
            off = d.matrix.entries[np.triu_indices(3, 1)]
            assert (off == 1).all()  # only level q1=0.3 lies below 0.5

    def test_partial_batch(self):
        idx, att = draw_index_batch(single_atom(), 2, 10,
                                    np.random.default_rng(0), threshold=0,
                                    allow_partial=True)
        assert len(idx) == 0 and att == 0


class TestEstimateExpectation:
    def test_constant_statistic(self):
        rep = estimate_expectation(three_atoms(), Statistic(2), 2,
                                   MCConfig(20, 10), seed=1)
        assert rep.estimate == 1.0 and rep.std_error == 0.0

    def test_single_atom_top_indicator(self):
        stat = Statistic(2).with_pattern(0, 1, 1)
        rep = estimate_expectation(single_atom(), stat, 2, MCConfig(10, 10), 1)
        assert rep.estimate == 1.0

    def test_against_enumeration(self):
        m = three_atoms()
        stat = Statistic(2).with_pattern(0, 1, 1)
        exact = enumerate_statistic(m, stat, 2)
        assert np.isclose(exact, 2 / 3, atol=1e-14)  # 6 of 9 pairs distinct
        rep = estimate_expectation(m, stat, 2, MCConfig(200, 100), seed=5)
        assert abs(rep.estimate - exact) <= 3 * rep.std_error + 1e-9

    def test_callable_matches_statistic(self):
        m = three_atoms()
        stat = Statistic(2).with_pattern(0, 1, 1)
        a = estimate_expectation(m, stat, 2, MCConfig(30, 20), seed=5)
        b = estimate_expectation(
            m, lambda lm: float(lm.entries[0, 1] == 1), 2,
            MCConfig(30, 20), seed=5)
        assert np.isclose(a.estimate, b.estimate, atol=1e-12)

    def test_conditional_acceptance_rate(self):
        # E-level acceptance of distinctness matches the mass formula shape
        model = TreeModel(TreeMeasureSpec((0.5,), 300, (0.5,), seed=3))
        stat = Statistic(3).with_pattern(0, 1, 1)
        rep = estimate_expectation(model, stat, 3, MCConfig(300, 100), seed=6,
                                   event=EventSpec("A_n", 3))
        assert rep.acceptance_rate is not None
        # infinite-cascade value: E<I(A_3)> = zeta^2
        assert abs(rep.acceptance_rate - 0.25) <= 0.03


class TestEnumeration:
    def test_single_atom(self):
        stat = Statistic(2).with_pattern(0, 1, 1)
        assert enumerate_statistic(single_atom(), stat, 2) == 1.0

    def test_two_orthogonal_collision(self):
        m = two_orthogonal(0.5)
        stat = Statistic(2).with_pattern(0, 1, 2)
        assert np.isclose(enumerate_statistic(m, stat, 2), 0.5, atol=1e-14)

    def test_conditional_removes_collisions(self):
        m = two_orthogonal(0.5)
        stat = Statistic(2).with_pattern(0, 1, 1)
        val = enumerate_statistic(m, stat, 2, EventSpec("A_n", 2))
        assert np.isclose(val, 1.0, atol=1e-14)

    def test_event_null(self):
        with pytest.raises(EventNull):
            enumerate_statistic(single_atom(), Statistic(2), 2,
                                EventSpec("A_n", 2))

    def test_too_large(self):
        m = build_tree_measure(TreeMeasureSpec((0.5,), 500, (0.5,), seed=1))
        with pytest.raises(TooLarge):
            enumerate_statistic(m, Statistic(3), 3)

    def test_callable_matches_packed(self):
        m = three_atoms((0.5, 0.3, 0.2))
        stat = Statistic(3).with_pattern(0, 1, 1).with_monomial(0, 2, 1)
        fast = enumerate_statistic(m, stat, 3)
        vals = np.array([0.7, 0.3, 0.7])
        slow = enumerate_statistic(
            m, lambda lm: float(lm.entries[0, 1] == 1) * vals[lm.entries[0, 2]],
            3)
        assert np.isclose(fast, slow, atol=1e-14)

    def test_hand_computed_value(self):
        # equal weights: P(R12 = 0.3 level) = 6/9 * ... pairwise distinct = 2/3
        m = three_atoms()
        stat = Statistic(2).with_pattern(0, 1, 1)
        assert np.isclose(enumerate_statistic(m, stat, 2), 2 / 3, atol=1e-14)
        # conditional on distinctness it is 1
        val = enumerate_statistic(m, stat, 2, EventSpec("A_n", 2))
        assert np.isclose(val, 1.0, atol=1e-14)


class TestConditionalLaw:
    @pytest.mark.parametrize("weights", [(1 / 3, 1 / 3, 1 / 3), (0.5, 0.3, 0.2)])
    def test_adversarial_pattern_law(self, weights):
        m = measure_from_gram(np.array(adversarial_measure().atoms @
                                       adversarial_measure().atoms.T),
                              np.array(weights),
                              OverlapGrid((0.3, 0.7, 1.0), None, 1.0))
        law = enumerate_matrix_law(m, 3, event_threshold=2)
        emp = empirical_matrix_law(m, 3, 40_000, seed=4, event_threshold=2)
        assert total_variation(law, emp) <= 0.02

    def test_law_probabilities_sum_to_one(self):
        m = three_atoms((0.6, 0.25, 0.15))
        law = enumerate_matrix_law(m, 3)
        assert np.isclose(sum(law.values()), 1.0, atol=1e-12)


class TestRatioEngine:
    def test_plain_means_have_unit_denominator(self):
        m = three_atoms()
        means = outer_stat_means(FrozenModel(m),
                                 [Statistic(2).with_pattern(0, 1, 1)], 2,
                                 MCConfig(10, 20), seed=1)
        assert means.shape == (10, 2)
        assert np.allclose(means[:, -1], 1.0)

    def test_descended_model_composes_threshold(self):
        model = DescendedModel(FrozenModel(three_atoms()), 1)
        assert model.threshold == 1
        assert model.grid.levels == (0.3,)
        means = outer_stat_means(model, [Statistic(2).with_pattern(0, 1, 1)],
                                 2, MCConfig(20, 50), seed=2)
        r, h, dbar = ratio_from_means(means)
        # conditioned on no collisions every pair sits at level 1
        assert np.isclose(r[0], 1.0, atol=1e-12)
        assert 0.4 < dbar < 0.9  # event mass ~ 2/3


class TestExchangeability:
    def test_relabeling_invariance(self):
        model = TreeModel(TreeMeasureSpec((0.3, 0.7), 30, (0.3, 0.6), seed=8))
        f12 = Statistic(3).with_pattern(0, 1, 2)
        f23 = Statistic(3).with_pattern(1, 2, 2)
        a = estimate_expectation(model, f12, 3, MCConfig(400, 100), seed=3)
        b = estimate_expectation(model, f23, 3, MCConfig(400, 100), seed=4)
        comb = np.hypot(a.std_error, b.std_error)
        assert abs(a.estimate - b.estimate) <= 3 * comb
