"""Hot numeric kernels: numba @njit versions with pure-numpy fallbacks.

Set OVERLAP_LAB_NO_NUMBA=1 to force the numpy path (the same switch the
benchmark uses to compare both). Every public name here dispatches to one
of the two implementations at import time; `_nb`/`_np` suffixed privates
stay importable so tests and benchmarks can compare them directly.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLE = os.environ.get("OVERLAP_LAB_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")

if not _DISABLE:
    try:
        from numba import njit

        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        HAVE_NUMBA = False
else:
    HAVE_NUMBA = False

USING_NUMBA = HAVE_NUMBA


# ---------------------------------------------------------------------------
# Jacobi eigensolver (cyclic sweeps, two-sided rotations)
# ---------------------------------------------------------------------------

def _off_norm(A):
    # direct off-diagonal Frobenius norm; the sum-of-squares difference
    # trick cancels catastrophically once the iteration converges
    off = A.copy()
    np.fill_diagonal(off, 0.0)
    return float(np.linalg.norm(off))


def _jacobi_np(A, tol, max_sweeps):
    """Cyclic Jacobi on a symmetric matrix; numpy row/col rotations.

    Returns (diag, vecs, sweeps, off_residual); diag unsorted.
    """
    A = A.astype(np.float64).copy()
    n = A.shape[0]
    V = np.eye(n)
    scale = np.max(np.abs(A))
    if scale == 0.0 or n == 1:
        return np.diag(A).copy(), V, 0, 0.0
    sweeps = 0
    off = _off_norm(A)
    while off > tol * scale and sweeps < max_sweeps:
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                app, aqq = A[p, p], A[q, q]
                rp = A[p, :].copy()
                rq = A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                cp = A[:, p].copy()
                cq = A[:, q].copy()
                A[:, p] = c * cp - s * cq
                A[:, q] = s * cp + c * cq
                A[p, p] = app - t * apq
                A[q, q] = aqq + t * apq
                A[p, q] = 0.0
                A[q, p] = 0.0
                vp = V[:, p].copy()
                V[:, p] = c * vp - s * V[:, q]
                V[:, q] = s * vp + c * V[:, q]
        sweeps += 1
        off = _off_norm(A)
    return np.diag(A).copy(), V, sweeps, off


if HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def _jacobi_nb(A_in, tol, max_sweeps):  # pragma: no cover - exercised via dispatch
        n = A_in.shape[0]
        A = A_in.copy()
        V = np.eye(n)
        scale = 0.0
        for i in range(n):
            for j in range(n):
                v = abs(A[i, j])
                if v > scale:
                    scale = v
        if scale == 0.0 or n == 1:
            d = np.empty(n)
            for i in range(n):
                d[i] = A[i, i]
            return d, V, 0, 0.0
        sweeps = 0
        off2 = 0.0
        for i in range(n):
            for j in range(n):
                if i != j:
                    off2 += A[i, j] * A[i, j]
        off = np.sqrt(off2)
        while off > tol * scale and sweeps < max_sweeps:
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = A[p, q]
                    if apq == 0.0:
                        continue
                    theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                    t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                    if theta < 0.0:
                        t = -t
                    c = 1.0 / np.sqrt(t * t + 1.0)
                    s = t * c
                    app = A[p, p]
                    aqq = A[q, q]
                    for j in range(n):
                        rp = A[p, j]
                        rq = A[q, j]
                        A[p, j] = c * rp - s * rq
                        A[q, j] = s * rp + c * rq
                    for i in range(n):
                        cp = A[i, p]
                        cq = A[i, q]
                        A[i, p] = c * cp - s * cq
                        A[i, q] = s * cp + c * cq
                    A[p, p] = app - t * apq
                    A[q, q] = aqq + t * apq
                    A[p, q] = 0.0
                    A[q, p] = 0.0
                    for i in range(n):
                        vp = V[i, p]
                        V[i, p] = c * vp - s * V[i, q]
                        V[i, q] = s * vp + c * V[i, q]
            sweeps += 1
            off2 = 0.0
            for i in range(n):
                for j in range(n):
                    if i != j:
                        off2 += A[i, j] * A[i, j]
            off = np.sqrt(off2)
        d = np.empty(n)
        for i in range(n):
            d[i] = A[i, i]
        return d, V, sweeps, off

    jacobi_raw = _jacobi_nb
else:
    jacobi_raw = _jacobi_np


# ---------------------------------------------------------------------------
# Ultrametric triple scan on a level matrix
# ---------------------------------------------------------------------------
# A triple violates when the minimum of its three pairwise levels is unique.

def _ultra_full_np(levels):
    n = levels.shape[0]
    checked = 0
    violations = 0
    witness = np.full(6, -1, dtype=np.int64)
    for a in range(n - 2):
        row = levels[a]
        sub = levels[a + 1 :, a + 1 :]
        x = row[a + 1 :][:, None]  # level (a,b)
        y = row[a + 1 :][None, :]  # level (a,c)
        m3 = np.minimum(np.minimum(x, y), sub)
        hits = (x == m3).astype(np.int8) + (y == m3) + (sub == m3)
        bad = np.triu(hits == 1, k=1)
        checked += (n - 1 - a) * (n - 2 - a) // 2
        cnt = int(bad.sum())
        if cnt and violations == 0:
            bs, cs = np.nonzero(bad)
            order = np.lexsort((cs, bs))
            b = int(bs[order[0]]) + a + 1
            c = int(cs[order[0]]) + a + 1
            witness[:] = (a, b, c, levels[a, b], levels[a, c], levels[b, c])
        violations += cnt
    return checked, violations, witness


def _ultra_triples_np(levels_batch, triples):
    """Count violations over explicit (t, a, b, c) rows into a matrix batch."""
    t, a, b, c = triples[:, 0], triples[:, 1], triples[:, 2], triples[:, 3]
    x = levels_batch[t, a, b]
    y = levels_batch[t, a, c]
    z = levels_batch[t, b, c]
    m3 = np.minimum(np.minimum(x, y), z)
    hits = (x == m3).astype(np.int8) + (y == m3) + (z == m3)
    bad = hits == 1
    violations = int(bad.sum())
    witness = np.full(6, -1, dtype=np.int64)
    if violations:
        i = int(np.flatnonzero(bad)[0])
        witness[:] = (a[i], b[i], c[i], x[i], y[i], z[i])
    return len(triples), violations, witness


if HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def _ultra_full_nb(levels):  # pragma: no cover - exercised via dispatch
        n = levels.shape[0]
        checked = 0
        violations = 0
        witness = np.full(6, -1, dtype=np.int64)
        for a in range(n - 2):
            for b in range(a + 1, n - 1):
                for c in range(b + 1, n):
                    x = levels[a, b]
                    y = levels[a, c]
                    z = levels[b, c]
                    m3 = min(x, min(y, z))
                    hits = 0
                    if x == m3:
                        hits += 1
                    if y == m3:
                        hits += 1
                    if z == m3:
                        hits += 1
                    checked += 1
                    if hits == 1:
                        if violations == 0:
                            witness[0] = a
                            witness[1] = b
                            witness[2] = c
                            witness[3] = x
                            witness[4] = y
                            witness[5] = z
                        violations += 1
        return checked, violations, witness

    @njit(cache=True, nogil=True)
    def _ultra_triples_nb(levels_batch, triples):  # pragma: no cover
        checked = triples.shape[0]
        violations = 0
        witness = np.full(6, -1, dtype=np.int64)
        for r in range(checked):
            t = triples[r, 0]
            a = triples[r, 1]
            b = triples[r, 2]
            c = triples[r, 3]
            x = levels_batch[t, a, b]
            y = levels_batch[t, a, c]
            z = levels_batch[t, b, c]
            m3 = min(x, min(y, z))
            hits = 0
            if x == m3:
                hits += 1
            if y == m3:
                hits += 1
            if z == m3:
                hits += 1
            if hits == 1:
                if violations == 0:
                    witness[0] = a
                    witness[1] = b
                    witness[2] = c
                    witness[3] = x
                    witness[4] = y
                    witness[5] = z
                violations += 1
        return checked, violations, witness

    ultra_full = _ultra_full_nb
    ultra_triples = _ultra_triples_nb
else:
    ultra_full = _ultra_full_np
    ultra_triples = _ultra_triples_np


# ---------------------------------------------------------------------------
# Rejection filter: keep index tuples whose pairwise levels stay <= threshold
# ---------------------------------------------------------------------------

def _accept_mask_np(idx, table, threshold):
    lv = table[idx[:, :, None], idx[:, None, :]]
    n = idx.shape[1]
    iu, ju = np.triu_indices(n, k=1)
    return (lv[:, iu, ju] <= threshold).all(axis=1)


if HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def _accept_mask_nb(idx, table, threshold):  # pragma: no cover
        c, n = idx.shape
        out = np.empty(c, dtype=np.bool_)
        for r in range(c):
            ok = True
            for i in range(n - 1):
                for j in range(i + 1, n):
                    if table[idx[r, i], idx[r, j]] > threshold:
                        ok = False
                        break
                if not ok:
                    break
            out[r] = ok
        return out

    accept_mask = _accept_mask_nb
else:
    accept_mask = _accept_mask_np


# ---------------------------------------------------------------------------
# Packed-statistic evaluation
# ---------------------------------------------------------------------------
# A statistic is a product of factors over one n x n level matrix:
#   * pattern indicators  I(levels[i,j] == req)
#   * monomials           vals[levels[i,j]] ** power
#   * prefix thresholds   I(levels[i,j] <= t for all i<j<r)
#   * sorted-triple match I(sorted(e01,e02,e12) == given sorted levels)
# S statistics are packed side by side with ptr offset arrays.

def _eval_stats_np(levels_batch, vals, pack):
    (pat_ptr, pat_i, pat_j, pat_req, mono_ptr, mono_i, mono_j, mono_pow,
     thr_ptr, thr_r, thr_t, srt_ptr, srt_lvl) = pack
    T = levels_batch.shape[0]
    S = len(pat_ptr) - 1
    out = np.ones((T, S))
    for s in range(S):
        v = np.ones(T)
        for p in range(pat_ptr[s], pat_ptr[s + 1]):
            v = v * (levels_batch[:, pat_i[p], pat_j[p]] == pat_req[p])
        for r in range(thr_ptr[s], thr_ptr[s + 1]):
            nr = thr_r[r]
            iu, ju = np.triu_indices(nr, k=1)
            ok = (levels_batch[:, iu, ju] <= thr_t[r]).all(axis=1)
            v = v * ok
        for w in range(srt_ptr[s], srt_ptr[s + 1]):
            tri = np.sort(
                np.stack(
                    [levels_batch[:, 0, 1], levels_batch[:, 0, 2], levels_batch[:, 1, 2]],
                    axis=1,
                ),
                axis=1,
            )
            want = srt_lvl[3 * w : 3 * w + 3]
            v = v * (tri == want[None, :]).all(axis=1)
        for q in range(mono_ptr[s], mono_ptr[s + 1]):
            base = vals[levels_batch[:, mono_i[q], mono_j[q]]]
            v = v * base ** float(mono_pow[q])
        out[:, s] = v
    return out


if HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def _eval_stats_nb(levels_batch, vals, pat_ptr, pat_i, pat_j, pat_req,
                       mono_ptr, mono_i, mono_j, mono_pow,
                       thr_ptr, thr_r, thr_t, srt_ptr, srt_lvl):  # pragma: no cover
        T = levels_batch.shape[0]
        S = len(pat_ptr) - 1
        out = np.empty((T, S))
        for t in range(T):
            for s in range(S):
                v = 1.0
                for p in range(pat_ptr[s], pat_ptr[s + 1]):
                    if levels_batch[t, pat_i[p], pat_j[p]] != pat_req[p]:
                        v = 0.0
                if v != 0.0:
                    for r in range(thr_ptr[s], thr_ptr[s + 1]):
                        nr = thr_r[r]
                        for i in range(nr - 1):
                            for j in range(i + 1, nr):
                                if levels_batch[t, i, j] > thr_t[r]:
                                    v = 0.0
                if v != 0.0:
                    for w in range(srt_ptr[s], srt_ptr[s + 1]):
                        a = levels_batch[t, 0, 1]
                        b = levels_batch[t, 0, 2]
                        c = levels_batch[t, 1, 2]
                        lo = min(a, min(b, c))
                        hi = max(a, max(b, c))
                        mid = a + b + c - lo - hi
                        if (lo != srt_lvl[3 * w] or mid != srt_lvl[3 * w + 1]
                                or hi != srt_lvl[3 * w + 2]):
                            v = 0.0
                if v != 0.0:
                    for q in range(mono_ptr[s], mono_ptr[s + 1]):
                        base = vals[levels_batch[t, mono_i[q], mono_j[q]]]
                        v = v * base ** np.float64(mono_pow[q])
                out[t, s] = v
        return out

    def _eval_stats_nb_wrap(levels_batch, vals, pack):
        return _eval_stats_nb(levels_batch, vals, *pack)

    eval_stats = _eval_stats_nb_wrap
else:
    eval_stats = _eval_stats_np


# ---------------------------------------------------------------------------
# Exact enumeration over all m**n atom tuples
# ---------------------------------------------------------------------------

def _enum_stats_np(weights, table, n, threshold, vals, pack, chunk=200_000):
    m = len(weights)
    total = m**n
    radix = m ** np.arange(n - 1, -1, -1, dtype=np.int64)
    event_mass = 0.0
    sums = np.zeros(len(pack[0]) - 1)
    for start in range(0, total, chunk):
        stop = min(start + chunk, total)
        lin = np.arange(start, stop, dtype=np.int64)
        idx = (lin[:, None] // radix[None, :]) % m
        w = np.prod(weights[idx], axis=1)
        lv = table[idx[:, :, None], idx[:, None, :]]
        if threshold >= 0:
            iu, ju = np.triu_indices(n, k=1)
            ok = (lv[:, iu, ju] <= threshold).all(axis=1)
            w = w * ok
        event_mass += float(w.sum())
        stat = _eval_stats_np(lv, vals, pack)
        sums += stat.T @ w
    return event_mass, sums


if HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def _enum_stats_nb(weights, table, n, threshold, vals,
                       pat_ptr, pat_i, pat_j, pat_req,
                       mono_ptr, mono_i, mono_j, mono_pow,
                       thr_ptr, thr_r, thr_t, srt_ptr, srt_lvl):  # pragma: no cover
        m = len(weights)
        S = len(pat_ptr) - 1
        idx = np.zeros(n, dtype=np.int64)
        lv = np.zeros((n, n), dtype=table.dtype)
        event_mass = 0.0
        sums = np.zeros(S)
        while True:
            w = 1.0
            for i in range(n):
                w *= weights[idx[i]]
            for i in range(n):
                for j in range(n):
                    lv[i, j] = table[idx[i], idx[j]]
            ok = True
            if threshold >= 0:
                for i in range(n - 1):
                    for j in range(i + 1, n):
                        if lv[i, j] > threshold:
                            ok = False
                            break
                    if not ok:
                        break
            if ok:
                event_mass += w
                for s in range(S):
                    v = 1.0
                    for p in range(pat_ptr[s], pat_ptr[s + 1]):
                        if lv[pat_i[p], pat_j[p]] != pat_req[p]:
                            v = 0.0
                    if v != 0.0:
                        for r in range(thr_ptr[s], thr_ptr[s + 1]):
                            nr = thr_r[r]
                            for i in range(nr - 1):
                                for j in range(i + 1, nr):
                                    if lv[i, j] > thr_t[r]:
                                        v = 0.0
                    if v != 0.0:
                        for t in range(srt_ptr[s], srt_ptr[s + 1]):
                            a = lv[0, 1]
                            b = lv[0, 2]
                            c = lv[1, 2]
                            lo = min(a, min(b, c))
                            hi = max(a, max(b, c))
                            mid = a + b + c - lo - hi
                            if (lo != srt_lvl[3 * t] or mid != srt_lvl[3 * t + 1]
                                    or hi != srt_lvl[3 * t + 2]):
                                v = 0.0
                    if v != 0.0:
                        for q in range(mono_ptr[s], mono_ptr[s + 1]):
                            base = vals[lv[mono_i[q], mono_j[q]]]
                            v = v * base ** np.float64(mono_pow[q])
                    sums[s] += v * w
            pos = n - 1
            while pos >= 0 and idx[pos] == m - 1:
                idx[pos] = 0
                pos -= 1
            if pos < 0:
                break
            idx[pos] += 1
        return event_mass, sums

    def _enum_stats_nb_wrap(weights, table, n, threshold, vals, pack):
        return _enum_stats_nb(weights, table, n, threshold, vals, *pack)

    enum_stats = _enum_stats_nb_wrap
else:
    enum_stats = _enum_stats_np


def _enum_law_np(weights, table, n, threshold, n_levels, chunk=200_000):
    m = len(weights)
    total = m**n
    radix = m ** np.arange(n - 1, -1, -1, dtype=np.int64)
    iu, ju = np.triu_indices(n, k=1)
    n_pos = len(iu)
    base = n_levels + 1
    mass = np.zeros(base**n_pos)
    key_radix = base ** np.arange(n_pos, dtype=np.int64)
    for start in range(0, total, chunk):
        stop = min(start + chunk, total)
        lin = np.arange(start, stop, dtype=np.int64)
        idx = (lin[:, None] // radix[None, :]) % m
        w = np.prod(weights[idx], axis=1)
        lv = table[idx[:, :, None], idx[:, None, :]][:, iu, ju].astype(np.int64)
        if threshold >= 0:
            ok = (lv <= threshold).all(axis=1)
            w = w * ok
        keys = lv @ key_radix
        mass += np.bincount(keys, weights=w, minlength=len(mass))
    return mass


if HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def _enum_law_nb(weights, table, n, threshold, n_levels):  # pragma: no cover
        m = len(weights)
        n_pos = n * (n - 1) // 2
        base = n_levels + 1
        size = 1
        for _ in range(n_pos):
            size *= base
        mass = np.zeros(size)
        idx = np.zeros(n, dtype=np.int64)
        while True:
            w = 1.0
            for i in range(n):
                w *= weights[idx[i]]
            ok = True
            key = 0
            mult = 1
            for i in range(n - 1):
                for j in range(i + 1, n):
                    lv = table[idx[i], idx[j]]
                    if threshold >= 0 and lv > threshold:
                        ok = False
                    key += lv * mult
                    mult *= base
            if ok:
                mass[key] += w
            pos = n - 1
            while pos >= 0 and idx[pos] == m - 1:
                idx[pos] = 0
                pos -= 1
            if pos < 0:
                break
            idx[pos] += 1
        return mass

    enum_law = _enum_law_nb
else:
    enum_law = _enum_law_np


def warmup():
    """Trigger JIT compilation of every kernel on tiny inputs."""
    a = np.array([[2.0, 1.0], [1.0, 2.0]])
    jacobi_raw(a, 1e-12, 30)
    lv = np.zeros((3, 3), dtype=np.int16)
    ultra_full(lv)
    batch = np.zeros((1, 3, 3), dtype=np.int16)
    ultra_triples(batch, np.array([[0, 0, 1, 2]], dtype=np.int64))
    table = np.zeros((2, 2), dtype=np.int16)
    accept_mask(np.zeros((2, 2), dtype=np.int64), table, np.int16(1))
    pack = empty_pack()
    eval_stats(batch, np.zeros(3), pack)
    enum_stats(np.array([1.0]), table[:1, :1], 2, -1, np.zeros(3), pack)
    enum_law(np.array([1.0]), table[:1, :1], 2, -1, 2)


def empty_pack():
    """Packed representation of zero statistics (see eval_stats)."""
    z32 = np.zeros(0, dtype=np.int32)
    z16 = np.zeros(0, dtype=np.int16)
    ptr = np.zeros(1, dtype=np.int32)
    return (ptr, z32, z32, z16, ptr, z32, z32, z32, ptr, z32, z16, ptr, z16)
