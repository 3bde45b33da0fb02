"""Dependence-graph-accelerated Shapley attribution of a binary target.

For each variable the attribution of its recovered term decomposes into the
term's own contribution minus a weighted sum of its conditional expectations
over subsets of the variable's closed neighborhood in the dependence graph.
With an empty neighborhood that collapses to value times coefficient; with a
small neighborhood the subset sum is exact; for large neighborhoods an
unbiased Monte Carlo estimator samples subsets with the matching weights.

Conditional expectations come from a pluggable estimator (k-nearest-neighbor
by default, a linear least-squares variant for diagnostics).  All exact and
brute-force evaluations that are compared against each other must share one
estimator instance, so estimator error cancels and only the combinatorial
reduction is under test.

After the coefficient fit and the estimator cache are built, per-sample
attribution touches no shared mutable state and is safe to parallelize.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb

import numpy as np
from scipy.spatial import cKDTree

from .stats.regression import LogisticFit, logistic_fit

MAX_EXACT_Q = 64
MAX_BRUTE_Q = 12
DEFAULT_EXACT_THRESHOLD = 10
DEFAULT_MC_SAMPLES = 10_000
_MC_TABLE_LIMIT = 4096


def neighborhoods(dep_graph, i):
    """Closed neighborhood of variable i in an undirected edge set."""
    out = {int(i)}
    for (a, b) in dep_graph:
        if a == i:
            out.add(int(b))
        elif b == i:
            out.add(int(a))
    return frozenset(out)


def psi_weights_exact(q, b):
    """Subset-size weights as exact rationals: psi_k = q / (C(b-1, k) * b)."""
    if not (1 <= b <= q):
        raise ValueError("need 1 <= b <= q")
    if q > MAX_EXACT_Q:
        raise ValueError(f"q > {MAX_EXACT_Q} not supported by exact weights")
    return [Fraction(q, comb(b - 1, k) * b) for k in range(b)]


def psi_weights(q, b):
    return np.array([float(w) for w in psi_weights_exact(q, b)])


class KnnCondExp:
    """k-nearest-neighbor conditional expectations over extracted terms.

    One estimator instance is fit on a training matrix; predictions for a
    conditioning set V regress column i on the V columns of the training
    sample via the mean of the k nearest training rows (k = round(sqrt(n))).
    The empty set predicts the training column mean, or exactly zero when
    constructed with empty_value=0.0 (population-centered oracle use).

    Tree construction is cached per conditioning set and shared across
    target variables; the cache is built single-threaded and read-only
    afterwards.
    """

    def __init__(self, k=None, empty_value=None):
        self._k = k
        self._empty = empty_value
        self._train = None
        self._trees = {}
        self._means = None

    def fit(self, train):
        train = np.asarray(train, dtype=np.float64)
        if train.ndim != 2 or train.shape[0] < 2:
            raise ValueError("training matrix must be n x q with n >= 2")
        self._train = train
        self._means = train.mean(axis=0)
        self._trees = {}
        if self._k is None:
            self._k = max(1, int(round(np.sqrt(train.shape[0]))))
        return self

    @property
    def is_fit(self):
        return self._train is not None

    def _tree(self, v):
        tree = self._trees.get(v)
        if tree is None:
            tree = cKDTree(self._train[:, list(v)])
            self._trees[v] = tree
        return tree

    def predict(self, i, v, cond_rows):
        """E-hat of column i given columns v taking the given row values.

        cond_rows has shape (n_eval, len(v)); v may be empty, in which case
        cond_rows is ignored and the empty-set value is broadcast.
        """
        return self.predict_many(v, cond_rows, [i])[int(i)]

    def predict_many(self, v, cond_rows, targets):
        """Predictions of several target columns for one conditioning set.

        The neighbor search depends only on the conditioning values, so all
        targets share a single tree query; this is what keeps exact subset
        sums affordable when several variables live in one clique.
        """
        if self._train is None:
            raise RuntimeError("estimator is not fit")
        v = tuple(sorted(int(x) for x in v))
        n_eval = len(cond_rows)
        if not v:
            out = {}
            for i in targets:
                base = self._means[i] if self._empty is None else self._empty
                out[int(i)] = np.full(n_eval, float(base))
            return out
        tree = self._tree(v)
        k = min(self._k, self._train.shape[0])
        _, idx = tree.query(np.asarray(cond_rows, dtype=np.float64), k=k, workers=-1)
        if k == 1:
            idx = idx[:, None]
        return {int(i): self._train[:, i][idx].mean(axis=1) for i in targets}


class LinearCondExp:
    """Least-squares conditional expectations; diagnostic estimator."""

    def __init__(self, empty_value=None):
        self._empty = empty_value
        self._train = None
        self._coefs = {}
        self._means = None

    def fit(self, train):
        self._train = np.asarray(train, dtype=np.float64)
        self._means = self._train.mean(axis=0)
        self._coefs = {}
        return self

    @property
    def is_fit(self):
        return self._train is not None

    def predict(self, i, v, cond_rows):
        if self._train is None:
            raise RuntimeError("estimator is not fit")
        v = tuple(sorted(int(x) for x in v))
        n_eval = len(cond_rows)
        if not v:
            base = self._means[i] if self._empty is None else self._empty
            return np.full(n_eval, float(base))
        key = (int(i), v)
        fitted = self._coefs.get(key)
        if fitted is None:
            X = np.hstack([self._train[:, list(v)], np.ones((self._train.shape[0], 1))])
            coef, *_ = np.linalg.lstsq(X, self._train[:, i], rcond=None)
            fitted = coef
            self._coefs[key] = fitted
        rows = np.asarray(cond_rows, dtype=np.float64)
        return np.hstack([rows, np.ones((n_eval, 1))]) @ fitted

    def predict_many(self, v, cond_rows, targets):
        return {int(i): self.predict(i, v, cond_rows) for i in targets}


def make_estimator(name, **kwargs):
    if name == "knn":
        return KnnCondExp(**kwargs)
    if name == "linear":
        return LinearCondExp(**kwargs)
    raise ValueError(f"unknown conditional-expectation estimator {name!r}")


def _subsets(items):
    items = list(items)
    for mask in range(1 << len(items)):
        yield tuple(items[k] for k in range(len(items)) if mask >> k & 1)


def _exact_column(estar, i, delta_i, others, q, estimator, eval_rows=None):
    """Closed-form attribution of column i for every row, vectorized."""
    rows = estar if eval_rows is None else eval_rows
    b = len(others) + 1
    psi = psi_weights(q, b)
    acc = np.zeros(rows.shape[0])
    for v in _subsets(others):
        pred = estimator.predict(i, v, rows[:, list(v)])
        acc += psi[len(v)] * pred
    return rows[:, i] * delta_i - (delta_i / q) * acc


def shapley_exact(estar_row, delta, dep_graph, estimator,
                  exact_threshold=DEFAULT_EXACT_THRESHOLD):
    """Closed-form attribution for one sample row; all variables.

    Requires every closed neighborhood to be at or under the exact-size
    threshold; larger ones must be routed to the Monte Carlo estimator.
    """
    row = np.asarray(estar_row, dtype=np.float64)
    q = row.shape[0]
    coef = _delta_vector(delta, q)
    out = np.empty(q)
    rows = row[None, :]
    for i in range(q):
        b_set = neighborhoods(dep_graph, i)
        if len(b_set) > exact_threshold:
            raise ValueError(
                f"neighborhood of {i} has size {len(b_set)} > {exact_threshold}; "
                "route to Monte Carlo")
        others = sorted(b_set - {i})
        out[i] = _exact_column(None, i, coef[i], others, q, estimator, eval_rows=rows)[0]
    return out


def _delta_vector(delta, q):
    if isinstance(delta, LogisticFit):
        coef = delta.coefficients
    else:
        coef = np.asarray(delta, dtype=np.float64)
    if coef.shape != (q,):
        raise ValueError("delta must provide one coefficient per variable")
    return coef


def _mc_subset_probs(b):
    """P(V) for V subsets of a (b-1)-set under size-uniform sampling."""
    n_v = 1 << (b - 1)
    probs = np.empty(n_v)
    for mask in range(n_v):
        k = bin(mask).count("1")
        probs[mask] = 1.0 / (b * comb(b - 1, k))
    return probs


def shapley_monte_carlo(estar_row, delta, dep_graph, i, num_samples, seed,
                        estimator):
    """Unbiased subset-sampled attribution of variable i for one row.

    Draws a subset size uniformly over 0..|B|-1, then a subset of that size
    uniformly, matching the closed form's weights exactly, so the estimator
    is unbiased; deterministic given the seed.
    """
    if num_samples < 1:
        raise ValueError("num_samples must be >= 1")
    row = np.asarray(estar_row, dtype=np.float64)
    q = row.shape[0]
    coef = _delta_vector(delta, q)
    b_set = neighborhoods(dep_graph, i)
    others = sorted(b_set - {i})
    b = len(b_set)
    rng = np.random.default_rng(seed)
    rows = row[None, :]

    if (1 << (b - 1)) <= _MC_TABLE_LIMIT:
        subsets = list(_subsets(others))
        preds = np.array([estimator.predict(i, v, rows[:, list(v)])[0] for v in subsets])
        probs = _mc_subset_probs(b)
        draws = rng.choice(len(subsets), size=num_samples, p=probs)
        cond = preds[draws]
    else:
        cond = np.empty(num_samples)
        for d in range(num_samples):
            k = int(rng.integers(b))
            v = tuple(sorted(rng.choice(others, size=k, replace=False))) if k else ()
            cond[d] = estimator.predict(i, v, rows[:, list(v)])[0]
    return float(np.mean(row[i] * coef[i] - cond * coef[i]))


def shapley_bruteforce(estar_row, delta, i, estimator, dep_graph):
    """Literal coalition sum over all subsets of the other q-1 variables.

    The marginal contribution of i against a coalition W depends on W only
    through its intersection with i's neighborhood, per the linear-model
    collapse; this is the uncollapsed reference the fast path is checked
    against.  Exponential in q, so refused above q = 12.
    """
    row = np.asarray(estar_row, dtype=np.float64)
    q = row.shape[0]
    if q > MAX_BRUTE_Q:
        raise ValueError(f"brute force refuses q > {MAX_BRUTE_Q}")
    coef = _delta_vector(delta, q)
    others_all = [j for j in range(q) if j != i]
    b_others = neighborhoods(dep_graph, i) - {i}
    rows = row[None, :]

    pred_cache = {}

    def cond_term(v):
        if v not in pred_cache:
            pred_cache[v] = estimator.predict(i, v, rows[:, list(v)])[0]
        return pred_cache[v]

    total = 0.0
    for w in _subsets(others_all):
        v = tuple(sorted(set(w) & b_others))
        gamma = row[i] * coef[i] - cond_term(v) * coef[i]
        total += gamma / comb(q - 1, len(w))
    return total / q


def rank_root_causes(values):
    """Descending stable ranking per row plus the positive-value mask."""
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError("attribution values must be finite")
    rankings = np.argsort(-values, axis=1, kind="stable")
    mask = values > 0
    return rankings, mask


@dataclass(frozen=True)
class ShapleyReport:
    values: np.ndarray
    delta: LogisticFit
    neighborhoods: tuple
    method_per_var: tuple
    rankings: np.ndarray
    root_cause_mask: np.ndarray
    exact_threshold: int
    mc_samples: int

    def to_meta_dict(self):
        return {
            "format_version": 1,
            "delta": self.delta.coefficients,
            "intercept": self.delta.intercept,
            "delta_converged": self.delta.converged,
            "neighborhood_sizes": [len(b) for b in self.neighborhoods],
            "method_per_var": list(self.method_per_var),
            "exact_threshold": self.exact_threshold,
            "mc_samples": self.mc_samples,
        }


MC_BATCH_DRAW_CAP = 256


def _sample_mc_weights(others, num_draws, rng):
    """Shared subset draws for one variable, collapsed to subset weights.

    Sampling matches the closed form's measure (size uniform, then subset
    uniform at that size), so averaging predictions with these weights is
    unbiased for each row; sharing the draws across rows trades independent
    per-row noise for one batched prediction per distinct subset.
    """
    b = len(others) + 1
    counts = {}
    arr = np.asarray(others, dtype=np.int64)
    for _ in range(num_draws):
        k = int(rng.integers(b))
        if k == 0:
            v = ()
        else:
            v = tuple(sorted(rng.choice(arr, size=k, replace=False).tolist()))
        counts[v] = counts.get(v, 0) + 1
    return {v: c / num_draws for v, c in counts.items()}


def batched_attribution_values(estar, coef, hoods, estimator,
                               exact_threshold=DEFAULT_EXACT_THRESHOLD,
                               mc_samples=DEFAULT_MC_SAMPLES, rng=None):
    """Attribution matrix for every row under per-variable exact/MC routing.

    Conditioning subsets are deduplicated across variables and each distinct
    subset is evaluated once for all rows and all target variables needing
    it.  Variables over the exact-size threshold use shared subset draws
    capped at MC_BATCH_DRAW_CAP; the row-level Monte Carlo entry point keeps
    the uncapped per-row semantics.
    """
    estar = np.asarray(estar, dtype=np.float64)
    n, q = estar.shape
    if rng is None:
        rng = np.random.default_rng(0)
    methods = []
    needs = {}  # subset -> list of (variable, weight)
    for i in range(q):
        others = sorted(hoods[i] - {i})
        b = len(others) + 1
        if b <= exact_threshold:
            methods.append("closed_form")
            psi = psi_weights(q, b)
            for v in _subsets(others):
                needs.setdefault(v, []).append((i, psi[len(v)] / q))
        else:
            methods.append("monte_carlo")
            draws = min(mc_samples, MC_BATCH_DRAW_CAP)
            for v, w in _sample_mc_weights(others, draws, rng).items():
                needs.setdefault(v, []).append((i, w))

    cond_acc = np.zeros((n, q))
    for v, wants in needs.items():
        preds = estimator.predict_many(v, estar[:, list(v)], [i for i, _ in wants])
        for i, w in wants:
            cond_acc[:, i] += w * preds[i]
    values = coef[None, :] * (estar - cond_acc)
    return values, tuple(methods)


def attribute(estar, target, dep_graph, estimator=None,
              exact_threshold=DEFAULT_EXACT_THRESHOLD,
              mc_samples=DEFAULT_MC_SAMPLES, seed=0) -> ShapleyReport:
    """Full per-sample attribution of a dataset's extracted terms.

    Fits the logistic coefficients once on the whole matrix, then routes
    each variable through the closed form when its neighborhood size is at
    most the threshold and through Monte Carlo otherwise.
    """
    estar = np.asarray(estar, dtype=np.float64)
    n, q = estar.shape
    fit = logistic_fit(target, estar)
    if estimator is None:
        estimator = KnnCondExp()
    if not getattr(estimator, "is_fit", False):
        estimator.fit(estar)

    hoods = [neighborhoods(dep_graph, i) for i in range(q)]
    values, methods = batched_attribution_values(
        estar, fit.coefficients, hoods, estimator,
        exact_threshold=exact_threshold, mc_samples=mc_samples,
        rng=np.random.default_rng(seed))
    rankings, mask = rank_root_causes(values)
    return ShapleyReport(
        values=values,
        delta=fit,
        neighborhoods=tuple(hoods),
        method_per_var=methods,
        rankings=rankings,
        root_cause_mask=mask,
        exact_threshold=exact_threshold,
        mc_samples=mc_samples,
    )
