"""Marginal independence tests behind a single decision contract.

Two backends:

* ``"taustar"`` (default): the rank-based sign covariance with its frozen
  large-sample null table.  O(n log n), deterministic, and sensitive to
  dependence that leaves the correlation at zero, which is the regime these
  tests actually run in (regression residuals are uncorrelated with their
  regressors by construction).
* ``"dcor"``: permutation-calibrated distance correlation, kept as a slower
  cross-check.  Quadratic cost, so it is guarded to moderate n.
"""

from __future__ import annotations

import importlib.resources
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit

from .taustar import (
    _tstar_from_perm,
    joint_rank_permutation,
    ranks_from_order,
    sort_order_and_ties,
    tie_fraction,
)

TIE_WARN_FRACTION = 0.20
MIN_SAMPLES = 100
_DCOR_MAX_N = 20000
_null_table = None


@dataclass(frozen=True)
class IndependenceDecision:
    statistic: float
    p_value: float
    independent: bool
    alpha: float
    backend: str
    tie_warning: bool = False

    def __post_init__(self):
        if not np.isfinite(self.statistic):
            raise ValueError("test statistic must be finite")


def _load_null_table():
    global _null_table
    if _null_table is None:
        ref = importlib.resources.files("rootshap.stats") / "taustar_null.npz"
        with ref.open("rb") as fh:
            data = np.load(fh)
            _null_table = {
                "probs": data["probs"],
                "quants": data["quants"],
                "anchor_q": float(data["tail_anchor_q"]),
                "anchor_p": float(data["tail_anchor_p"]),
                "theta": float(data["tail_theta"]),
            }
    return _null_table


def tau_star_p_value(scaled_stat):
    """Upper-tail p-value of n*t* against the frozen null table.

    Beyond the tabulated range the tail is extrapolated exponentially from
    the fitted excess mean, so extreme statistics get meaningful tiny
    p-values instead of a clamp at the table edge.
    """
    tab = _load_null_table()
    if scaled_stat > tab["anchor_q"]:
        p = tab["anchor_p"] * np.exp(-(scaled_stat - tab["anchor_q"]) / tab["theta"])
        return float(max(p, 1e-300))
    cdf = np.interp(scaled_stat, tab["quants"], tab["probs"], left=0.0, right=1.0 - tab["anchor_p"])
    return float(1.0 - cdf)


def _taustar_test(x, y, alpha):
    n = x.shape[0]
    perm = joint_rank_permutation(x, y)
    stat = n * float(_tstar_from_perm(perm))
    p = tau_star_p_value(stat)
    return max(stat, 0.0), p


def prepared_taustar_decision(x, partner_ranks, partner_ties, alpha):
    """Rank test of x against a column whose ranks are already known.

    Extraction loops test many residuals against the same columns; caching
    the partner's ranks halves the sorting work.  Semantically identical to
    independence_test with the taustar backend.
    """
    n = x.shape[0]
    order_x, ties_x = sort_order_and_ties(x)
    perm = partner_ranks[order_x]
    stat = n * float(_tstar_from_perm(perm))
    p = tau_star_p_value(stat)
    tie_frac = max(ties_x, partner_ties)
    tie_warning = tie_frac > TIE_WARN_FRACTION
    if tie_warning:
        warnings.warn(
            f"tie fraction {tie_frac:.2f} exceeds {TIE_WARN_FRACTION:.0%}; "
            "rank-based decisions may be degraded",
            RuntimeWarning,
            stacklevel=2,
        )
    return IndependenceDecision(
        statistic=max(stat, 0.0),
        p_value=float(p),
        independent=bool(p > alpha),
        alpha=float(alpha),
        backend="taustar",
        tie_warning=tie_warning,
    )


def column_rank_data(v):
    """(ranks, tie fraction) for reuse across many prepared tests."""
    order, ties = sort_order_and_ties(v)
    return ranks_from_order(order), ties


@njit(cache=True)
def _dcov_sums(x, y):
    n = x.shape[0]
    a_row = np.zeros(n)
    b_row = np.zeros(n)
    s1 = 0.0
    for i in range(n):
        for j in range(n):
            dx = abs(x[i] - x[j])
            dy = abs(y[i] - y[j])
            a_row[i] += dx
            b_row[i] += dy
            s1 += dx * dy
    return s1, a_row, b_row


@njit(cache=True)
def _dcov_s1(x, y):
    n = x.shape[0]
    s1 = 0.0
    for i in range(n):
        for j in range(n):
            s1 += abs(x[i] - x[j]) * abs(y[i] - y[j])
    return s1


def independence_test(x, y, alpha=0.05, backend="taustar", permutations=199, seed=0):
    """Decide x independent-of y at level alpha.

    Returns an IndependenceDecision; ``independent`` is exactly
    ``p_value > alpha``.  Raises on fewer than 100 samples.  A tie fraction
    above 20% in either margin degrades the rank statistic and is surfaced
    both as a Python warning and on the decision record.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d arrays of equal length")
    n = x.shape[0]
    if n < MIN_SAMPLES:
        raise ValueError(f"independence test requires n >= {MIN_SAMPLES}, got {n}")

    tie_frac = max(tie_fraction(x), tie_fraction(y))
    tie_warning = tie_frac > TIE_WARN_FRACTION
    if tie_warning:
        warnings.warn(
            f"tie fraction {tie_frac:.2f} exceeds {TIE_WARN_FRACTION:.0%}; "
            "rank-based decisions may be degraded",
            RuntimeWarning,
            stacklevel=2,
        )

    if backend == "taustar":
        stat, p = _taustar_test(x, y, alpha)
    elif backend == "dcor":
        stat, p = _dcor_permutation_test(x, y, permutations, seed)
    else:
        raise ValueError(f"unknown independence backend: {backend!r}")

    return IndependenceDecision(
        statistic=float(stat),
        p_value=float(p),
        independent=bool(p > alpha),
        alpha=float(alpha),
        backend=backend,
        tie_warning=tie_warning,
    )


def _dcor_permutation_test(x, y, permutations, seed):
    n = x.shape[0]
    if n > _DCOR_MAX_N:
        raise ValueError(f"dcor backend is quadratic; n={n} exceeds the {_DCOR_MAX_N} guard")
    s1, a_row, b_row = _dcov_sums(x, y)
    a_tot = a_row.sum()
    b_tot = b_row.sum()
    mean_term = (a_tot / n**2) * (b_tot / n**2)
    vxy = s1 / n**2 + mean_term - 2.0 * np.dot(a_row, b_row) / n**3
    vxx = _dcov_s1(x, x) / n**2 + (a_tot / n**2) ** 2 - 2.0 * np.dot(a_row, a_row) / n**3
    vyy = _dcov_s1(y, y) / n**2 + (b_tot / n**2) ** 2 - 2.0 * np.dot(b_row, b_row) / n**3
    denom = np.sqrt(max(vxx, 0.0) * max(vyy, 0.0))
    stat = 0.0 if denom <= 0 else max(vxy, 0.0) / denom

    rng = np.random.default_rng(seed)
    exceed = 0
    for _ in range(permutations):
        pi = rng.permutation(n)
        s1p = _dcov_s1(x, y[pi])
        vp = s1p / n**2 + mean_term - 2.0 * np.dot(a_row, b_row[pi]) / n**3
        if vp >= vxy - 1e-15:
            exceed += 1
    p = (1.0 + exceed) / (permutations + 1.0)
    return stat, p
