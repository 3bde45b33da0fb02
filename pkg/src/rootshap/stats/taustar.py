"""Bergsma-Dassios sign covariance (tau*) in O(n log n).

The statistic is the degree-4 U-statistic whose symmetrized kernel equals
2/3 on the eight "separated" order patterns (the two x-smallest points hold
the two smallest, or the two largest, y ranks) and -1/3 on the other sixteen.
That reduces the statistic to counting separated quadruples:

    t* = N_sep / C(n, 4) - 1/3

N_sep is obtained from a sparse corner-tree decomposition: a fixed integer
combination of twelve quadrant-tree counts whose expansion over 4-point
order patterns equals the separated-pattern indicator (the combination is
re-derived from scratch and checked in the test suite).  Four of the trees
are stars in the per-point quadrant counts, the other eight collapse into
four weighted Fenwick sweeps, so one evaluation costs five Fenwick passes.

t* is a pure rank statistic: its null distribution under independence with
continuous margins is the same for every data distribution, which is what
makes the frozen quantile table in ``taustar_null.npz`` valid.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _fenwick_add(tree, i, v):
    i += 1
    n = tree.shape[0] - 1
    while i <= n:
        tree[i] += v
        i += i & (-i)


@njit(cache=True)
def _fenwick_prefix(tree, i):
    # sum over positions [0, i)
    s = 0.0
    while i > 0:
        s += tree[i]
        i -= i & (-i)
    return s


@njit(cache=True)
def _fenwick2_add(tree, i, va, vb):
    # two interleaved trees sharing index traversal: one cache line serves
    # both values, which keeps the large-n sweeps close to n log n wall time
    i += 1
    n = (tree.shape[0] >> 1) - 1
    while i <= n:
        tree[2 * i] += va
        tree[2 * i + 1] += vb
        i += i & (-i)


@njit(cache=True)
def _fenwick2_prefix(tree, i):
    sa = 0.0
    sb = 0.0
    while i > 0:
        sa += tree[2 * i]
        sb += tree[2 * i + 1]
        i -= i & (-i)
    return sa, sb


@njit(cache=True)
def _tstar_from_perm(perm):
    """t* for points (i, perm[i]); perm must be a permutation of 0..n-1."""
    n = perm.shape[0]
    nw = np.empty(n, dtype=np.float64)
    se = np.empty(n, dtype=np.float64)

    # ascending pass: quadrant counts from a running count tree, fused with
    # the north-west chair sweeps
    #   c[t] = sum of ne[s] over s strictly north-west of t
    #   d[t] = sum of sw[s] over s strictly north-west of t
    chair_sum = 0.0
    star_sum = 0.0
    occ_123 = 0.0
    occ_321 = 0.0
    tree_cnt = np.zeros(n + 1, dtype=np.float64)
    tree_cd = np.zeros(2 * (n + 1), dtype=np.float64)
    tot_c = 0.0
    tot_d = 0.0
    for i in range(n):
        p = perm[i]
        sw_i = _fenwick_prefix(tree_cnt, p)
        nw_i = i - sw_i
        ne_i = (n - 1 - p) - nw_i
        se_i = (n - 1 - i) - ne_i
        nw[i] = nw_i
        se[i] = se_i
        _fenwick_add(tree_cnt, p, 1.0)

        pref_c, pref_d = _fenwick2_prefix(tree_cd, p + 1)
        chair_sum += ((tot_c - pref_c) - (tot_d - pref_d)) * (ne_i - sw_i)
        _fenwick2_add(tree_cd, p, ne_i, sw_i)
        tot_c += ne_i
        tot_d += sw_i

        star_sum += ne_i ** 3 + nw_i ** 3 - 3.0 * se_i * se_i * sw_i \
            - 3.0 * se_i * sw_i * sw_i
        occ_123 += sw_i * ne_i
        occ_321 += nw_i * se_i

    # descending pass: the north-east chair sweeps
    #   a[t] = sum of nw[s] over s strictly north-east of t
    #   b[t] = sum of se[s] over s strictly north-east of t
    tree_ab = np.zeros(2 * (n + 1), dtype=np.float64)
    tot_a = 0.0
    tot_b = 0.0
    for i in range(n - 1, -1, -1):
        p = perm[i]
        pref_a, pref_b = _fenwick2_prefix(tree_ab, p + 1)
        chair_sum += ((tot_a - pref_a) - (tot_b - pref_b)) * (nw[i] - se[i])
        _fenwick2_add(tree_ab, p, nw[i], se[i])
        tot_a += nw[i]
        tot_b += se[i]

    total = star_sum + 3.0 * chair_sum
    c2 = n * (n - 1) / 2.0
    c3 = c2 * (n - 2) / 3.0
    c4 = c3 * (n - 3) / 4.0
    n_sep = (total - c2 - 3.0 * c3 - 3.0 * (occ_123 + occ_321)) / 6.0
    return n_sep / c4 - 1.0 / 3.0


@njit(cache=True)
def _tstar_brute_from_perm(perm):
    """Literal enumeration of all quadruples. Test oracle only."""
    n = perm.shape[0]
    n_sep = 0
    total = 0
    for i in range(n - 3):
        for j in range(i + 1, n - 2):
            for k in range(j + 1, n - 1):
                for m in range(k + 1, n):
                    a = perm[i]
                    b = perm[j]
                    c = perm[k]
                    d = perm[m]
                    lo = c if c < d else d
                    hi = d if c < d else c
                    if (a < lo and b < lo) or (a > hi and b > hi):
                        n_sep += 1
                    total += 1
    return n_sep / total - 1.0 / 3.0


def sort_order_and_ties(v):
    """Deterministic sort order of v plus its tie fraction.

    The tie fraction (share of values duplicating an earlier one) falls out
    of the sorted copy for free, so callers avoid a second sort.
    """
    v = np.asarray(v, dtype=np.float64)
    order = np.argsort(v, kind="quicksort").astype(np.int32)
    s = v[order]
    ties = float(np.count_nonzero(s[1:] == s[:-1])) / v.size if v.size else 0.0
    return order, ties


def ranks_from_order(order):
    ranks = np.empty(order.size, dtype=np.int32)
    ranks[order] = np.arange(order.size, dtype=np.int32)
    return ranks


def joint_rank_permutation(x, y):
    """y ranks listed in x order; deterministic for any fixed input."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise ValueError("x and y must be 1-d arrays of equal length")
    order_x, _ = sort_order_and_ties(x)
    order_y, _ = sort_order_and_ties(y)
    return ranks_from_order(order_y)[order_x]


def tie_fraction(v):
    v = np.asarray(v)
    return 1.0 - np.unique(v).size / v.size


def tau_star(x, y):
    """The t* statistic for a sample of pairs; in [-1/3, 2/3] with 0 at independence."""
    perm = joint_rank_permutation(x, y)
    if perm.shape[0] < 4:
        raise ValueError("tau_star needs at least 4 observations")
    return float(_tstar_from_perm(perm))


def tau_star_brute(x, y):
    """Quartic-time reference evaluation; use only for small n."""
    perm = joint_rank_permutation(x, y)
    if perm.shape[0] < 4:
        raise ValueError("tau_star needs at least 4 observations")
    if perm.shape[0] > 300:
        raise ValueError("brute-force evaluation is limited to n <= 300")
    return float(_tstar_brute_from_perm(perm))
