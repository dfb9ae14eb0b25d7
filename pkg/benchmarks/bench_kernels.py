#!/usr/bin/env python3
"""Side-by-side benchmark: numba @njit kernels vs the pure-numpy fallbacks.

Runs each hot kernel on representative workloads and prints timings plus
speedups. The same fallback path is what OVERLAP_LAB_NO_NUMBA=1 selects
package-wide.

Usage: python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from overlap_lab import _kernels
from overlap_lab.observables import Statistic, pack_statistics


def timeit(fn, *args, repeat=5):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_jacobi(rng):
    A = rng.normal(size=(96, 96))
    A = (A + A.T) / 2
    return ("jacobi 96x96",
            lambda: _kernels._jacobi_nb(A, 1e-10, 100),
            lambda: _kernels._jacobi_np(A, 1e-10, 100))


def bench_ultra(rng):
    lv = rng.integers(1, 4, size=(120, 120)).astype(np.int16)
    lv = np.triu(lv, 1)
    lv = lv + lv.T
    return ("ultra scan n=120 (280k triples)",
            lambda: _kernels._ultra_full_nb(lv),
            lambda: _kernels._ultra_full_np(lv))


def bench_accept(rng):
    table = rng.integers(1, 4, size=(500, 500)).astype(np.int16)
    table = np.maximum(table, table.T)
    idx = rng.integers(0, 500, size=(200_000, 5))
    return ("accept mask 200k x 5 replicas",
            lambda: _kernels._accept_mask_nb(idx, table, 2),
            lambda: _kernels._accept_mask_np(idx, table, 2))


def _stats_pack():
    stats = [Statistic(5).with_pattern(0, 1, 1).with_monomial(0, 4, 2),
             Statistic(5).with_threshold(5, 2),
             Statistic(5).with_sorted_triple((1, 1, 2))]
    return pack_statistics(stats)


def bench_eval(rng):
    lv = rng.integers(1, 4, size=(100_000, 5, 5)).astype(np.int16)
    lv = np.ascontiguousarray(np.triu(lv, 1) + np.transpose(np.triu(lv, 1), (0, 2, 1)))
    vals = np.array([1.0, 0.0, 0.3, 0.7])
    pack = _stats_pack()
    return ("eval 3 stats on 100k matrices",
            lambda: _kernels._eval_stats_nb_wrap(lv, vals, pack),
            lambda: _kernels._eval_stats_np(lv, vals, pack))


def bench_enum(rng):
    m = 14
    w = rng.random(m)
    w /= w.sum()
    table = rng.integers(1, 4, size=(m, m)).astype(np.int16)
    table = np.maximum(table, table.T)
    vals = np.array([1.0, 0.0, 0.3, 0.7])
    pack = _stats_pack()
    return (f"enumerate {m}^5 tuples",
            lambda: _kernels._enum_stats_nb_wrap(w, table, 5, 2, vals, pack),
            lambda: _kernels._enum_stats_np(w, table, 5, 2, vals, pack))


def main():
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba unavailable or disabled; nothing to compare")
    print("warming up JIT...")
    t0 = time.time()
    _kernels.warmup()
    print(f"warmup {time.time() - t0:.1f}s\n")
    rng = np.random.default_rng(0)
    rows = []
    for bench in (bench_jacobi, bench_ultra, bench_accept, bench_eval,
                  bench_enum):
        name, nb, np_ = bench(rng)
        nb()  # compile the exact signature outside the timed region
        t_nb, _ = timeit(nb)
        t_np, _ = timeit(np_)
        rows.append((name, t_np, t_nb, t_np / t_nb))
    print(f"{'kernel':<34} {'numpy (s)':>10} {'numba (s)':>10} {'speedup':>8}")
    print("-" * 66)
    for name, t_np, t_nb, s in rows:
        print(f"{name:<34} {t_np:>10.4f} {t_nb:>10.4f} {s:>7.1f}x")


if __name__ == "__main__":
    main()
