"""k-medoids kernels for 1-D data (numba).

In one dimension each medoid owns a contiguous run of the sorted values,
split at midpoints between neighbouring medoids, so the cost of a medoid set
follows from prefix sums in ``O(k log n)``. The initial medoids come from an
exact dynamic program over contiguous runs (each run's best medoid is its
lower median); the PAM SWAP phase then runs on those medoids.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _set_cost(xs, prefix, med):
    """Total ``|x - m|`` cost of sorted medoid values ``med`` over sorted ``xs``."""
    n = xs.shape[0]
    k = med.shape[0]
    total = 0.0
    lo = 0
    for i in range(k):
        m = med[i]
        if i < k - 1:
            hi = np.searchsorted(xs, 0.5 * (m + med[i + 1]), side="right")
        else:
            hi = n
        if hi < lo:
            hi = lo
        c = np.searchsorted(xs, m)
        if c < lo:
            c = lo
        if c > hi:
            c = hi
        total += m * (c - lo) - (prefix[c] - prefix[lo])
        total += (prefix[hi] - prefix[c]) - m * (hi - c)
        lo = hi
    return total


@njit(cache=True)
def _with(med, v):
    """Sorted copy of ``med`` with ``v`` inserted."""
    k = med.shape[0]
    out = np.empty(k + 1)
    j = 0
    placed = False
    for i in range(k):
        if not placed and v < med[i]:
            out[j] = v
            j += 1
            placed = True
        out[j] = med[i]
        j += 1
    if not placed:
        out[j] = v
    return out


@njit(cache=True)
def _better(val, tb, best_val, best_tb, tol):
    if val < best_val - tol:
        return True
    return abs(val - best_val) <= tol and tb < best_tb


@njit(cache=True)
def _run_cost(xs, prefix, i, j):
    """Cost of sorted run ``xs[i:j]`` around its lower median."""
    m = (i + j - 1) // 2
    v = xs[m]
    return v * (m - i) - (prefix[m] - prefix[i]) + (prefix[j] - prefix[m]) - v * (j - m)


@njit(cache=True)
def optimal_runs(xs, prefix, k):
    """Sorted positions of the medoids of an optimal split of ``xs`` into ``k`` runs."""
    n = xs.shape[0]
    best = np.full((k + 1, n + 1), np.inf)
    cut = np.zeros((k + 1, n + 1), np.int64)
    best[0, 0] = 0.0
    for c in range(1, k + 1):
        for j in range(c, n + 1):
            for i in range(c - 1, j):
                if best[c - 1, i] == np.inf:
                    continue
                v = best[c - 1, i] + _run_cost(xs, prefix, i, j)
                if v < best[c, j]:
                    best[c, j] = v
                    cut[c, j] = i
    pos = np.empty(k, np.int64)
    j = n
    for c in range(k, 0, -1):
        i = cut[c, j]
        pos[c - 1] = (i + j - 1) // 2
        j = i
    return pos


@njit(cache=True)
def pam(x, k, tiebreak, max_swaps):
    """Return medoid positions (indices into ``x``) after seeding and SWAP."""
    n = x.shape[0]
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    prefix = np.zeros(n + 1)
    for i in range(n):
        prefix[i + 1] = prefix[i] + xs[i]
    scale = 1e-12 * max(1.0, abs(prefix[n]) + 1.0)

    medoids = order[optimal_runs(xs, prefix, k)]
    is_med = np.zeros(n, np.bool_)
    for i in range(k):
        is_med[medoids[i]] = True
    vals = np.sort(x[medoids])

    cost = _set_cost(xs, prefix, vals)
    for _ in range(max_swaps):
        best_cost = cost
        best_slot = -1
        best_h = -1
        for slot in range(k):
            others = np.empty(k - 1)
            j = 0
            for i in range(k):
                if i != slot:
                    others[j] = x[medoids[i]]
                    j += 1
            others.sort()
            slot_val = np.inf
            slot_tb = n + 1
            slot_h = -1
            for h in range(n):
                if is_med[h]:
                    continue
                trial = _set_cost(xs, prefix, _with(others, x[h]))
                if _better(trial, tiebreak[h], slot_val, slot_tb, scale):
                    slot_val, slot_tb, slot_h = trial, tiebreak[h], h
            if slot_h >= 0 and slot_val < best_cost - 1e-12 * max(1.0, abs(best_cost)):
                best_cost, best_slot, best_h = slot_val, slot, slot_h
        if best_slot < 0:
            break
        is_med[medoids[best_slot]] = False
        medoids[best_slot] = best_h
        is_med[best_h] = True
        cost = best_cost
    return medoids
