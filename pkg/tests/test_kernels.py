"""The numba kernels and their pure-numpy fallbacks must agree."""

import numpy as np
import pytest

from overlap_lab import _kernels
from overlap_lab.observables import Statistic, pack_statistics

needs_numba = pytest.mark.skipif(not _kernels.HAVE_NUMBA,
                                 reason="numba path disabled")


def random_stats(rng, n, k):
    stats = []
    s = Statistic(n).with_pattern(0, 1, int(rng.integers(1, k + 1)))
    stats.append(s)
    stats.append(Statistic(n).with_monomial(0, 1, 2).with_monomial(1, 2, 1))
    stats.append(Statistic(n).with_threshold(n, k - 1))
    if n >= 3:
        stats.append(Statistic(n).with_sorted_triple((1, 1, min(2, k))))
    stats.append(Statistic(n))
    return stats


@needs_numba
class TestPathsAgree:
    def test_jacobi(self):
        rng = np.random.default_rng(0)
        for n in (2, 5, 17):
            A = rng.normal(size=(n, n))
            A = (A + A.T) / 2
            d_nb, _, _, _ = _kernels._jacobi_nb(A, 1e-12, 100)
            d_np, _, _, _ = _kernels._jacobi_np(A, 1e-12, 100)
            assert np.allclose(np.sort(d_nb), np.sort(d_np), atol=1e-10)

    def test_ultra_full(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            n = int(rng.integers(3, 9))
            lv = rng.integers(1, 4, size=(n, n)).astype(np.int16)
            lv = np.triu(lv, 1)
            lv = lv + lv.T
            a = _kernels._ultra_full_nb(lv)
            b = _kernels._ultra_full_np(lv)
            assert a[0] == b[0] and a[1] == b[1]
            assert np.array_equal(a[2], b[2])

    def test_ultra_triples(self):
        rng = np.random.default_rng(2)
        batch = rng.integers(1, 4, size=(6, 5, 5)).astype(np.int16)
        batch = np.triu(batch, 1) + np.transpose(np.triu(batch, 1), (0, 2, 1))
        triples = np.column_stack([
            rng.integers(0, 6, 50),
            np.sort(np.array([rng.choice(5, 3, replace=False) for _ in range(50)]), axis=1),
        ]).astype(np.int64)
        a = _kernels._ultra_triples_nb(batch, triples)
        b = _kernels._ultra_triples_np(batch, triples)
        assert a[0] == b[0] and a[1] == b[1]
        assert np.array_equal(a[2], b[2])

    def test_accept_mask(self):
        rng = np.random.default_rng(3)
        table = rng.integers(1, 5, size=(20, 20)).astype(np.int16)
        table = np.maximum(table, table.T)
        idx = rng.integers(0, 20, size=(300, 4))
        for t in (1, 2, 3, 4):
            a = _kernels._accept_mask_nb(idx, table, t)
            b = _kernels._accept_mask_np(idx, table, t)
            assert np.array_equal(a, b)

    def test_eval_stats(self):
        rng = np.random.default_rng(4)
        n, k = 4, 3
        lv = rng.integers(1, k + 1, size=(40, n, n)).astype(np.int16)
        lv = np.triu(lv, 1) + np.transpose(np.triu(lv, 1), (0, 2, 1))
        vals = np.array([1.0, 0.1, 0.4, 0.9])
        pack = pack_statistics(random_stats(rng, n, k))
        a = _kernels._eval_stats_nb_wrap(np.ascontiguousarray(lv), vals, pack)
        b = _kernels._eval_stats_np(lv, vals, pack)
        assert np.allclose(a, b, atol=1e-14)

    def test_enum_stats_and_law(self):
        rng = np.random.default_rng(5)
        m, n, k = 4, 3, 3
        w = rng.random(m)
        w /= w.sum()
        table = rng.integers(1, k + 1, size=(m, m)).astype(np.int16)
        table = np.maximum(table, table.T)
        vals = np.array([1.0, 0.1, 0.4, 0.9])
        pack = pack_statistics(random_stats(rng, n, k))
        for t in (-1, 2):
            mass_a, sums_a = _kernels._enum_stats_nb_wrap(w, table, n, t, vals, pack)
            mass_b, sums_b = _kernels._enum_stats_np(w, table, n, t, vals, pack)
            assert np.isclose(mass_a, mass_b, atol=1e-14)
            assert np.allclose(sums_a, sums_b, atol=1e-14)
            law_a = _kernels._enum_law_nb(w, table, n, t, k)
            law_b = _kernels._enum_law_np(w, table, n, t, k)
            assert np.allclose(law_a, law_b, atol=1e-14)


class TestStatisticReference:
    """Kernel evaluation matches the plain-python Statistic oracle."""

    def test_matches_evaluate_one(self):
        rng = np.random.default_rng(6)
        n, k = 4, 3
        lv = rng.integers(1, k + 1, size=(25, n, n)).astype(np.int16)
        lv = np.triu(lv, 1) + np.transpose(np.triu(lv, 1), (0, 2, 1))
        vals = np.array([0.9, 0.0, 0.3, 0.7])
        stats = random_stats(rng, n, k)
        pack = pack_statistics(stats)
        fast = _kernels.eval_stats(np.ascontiguousarray(lv), vals, pack)
        for t in range(lv.shape[0]):
            for s, st in enumerate(stats):
                assert np.isclose(fast[t, s], st.evaluate_one(lv[t], vals),
                                  atol=1e-14)
