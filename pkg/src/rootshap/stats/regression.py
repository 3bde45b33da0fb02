"""Standardization, least-squares residualization and logistic regression."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RANK_TOL = 1e-9


class DegenerateInputError(ValueError):
    pass


def standardize(data):
    """Center and scale each column to mean 0, sample variance 1 (ddof=1).

    Returns (standardized, means, scales) so the transform is invertible.
    A constant column cannot be scaled and raises, naming the column.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 2:
        raise ValueError("standardize expects an n x q matrix with n >= 2")
    means = data.mean(axis=0)
    scales = data.std(axis=0, ddof=1)
    bad = np.nonzero(scales <= 0)[0]
    if bad.size:
        raise DegenerateInputError(f"constant column(s) at index {bad.tolist()}")
    return (data - means) / scales, means, scales


def ols_residuals_detail(y, W):
    """Residuals of y on the columns of W, with rank handling.

    No intercept: callers operate on centered data.  Rank-deficient W is
    handled by a pivoted QR; dependent columns are dropped and their
    (original) indices reported.

    Returns (residuals, coefficients, dropped_columns).  Coefficients are
    indexed like W's columns, zero where dropped.
    """
    y = np.asarray(y, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if W.ndim == 1:
        W = W[:, None]
    n, k = W.shape
    if k < 1 or n <= k:
        raise ValueError("need k >= 1 regressors and n > k samples")
    from scipy.linalg import qr

    Q, R, piv = qr(W, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = diag[0] * max(n, k) * np.finfo(float).eps if diag.size and diag[0] > 0 else 0.0
    rank = int(np.sum(diag > max(tol, RANK_TOL)))
    kept = piv[:rank]
    dropped = sorted(piv[rank:].tolist())

    coef = np.zeros(k)
    if rank > 0:
        z = Q[:, :rank].T @ y
        coef_kept = np.linalg.solve(R[:rank, :rank], z)
        coef[kept] = coef_kept
    resid = y - W @ coef
    return resid, coef, dropped


def ols_residuals(y, W):
    """Residuals of y linearly regressed on W (see ols_residuals_detail)."""
    resid, _, _ = ols_residuals_detail(y, W)
    return resid


def fast_residual(y, W):
    """Normal-equation residuals for well-conditioned small-k regressions.

    The extraction loop runs thousands of k <= 3 regressions where the
    pivoted QR's overhead dominates; the Gram solve is an order of magnitude
    cheaper and falls back to the pivoted path whenever the result fails
    the orthogonality tolerance.
    """
    gram = W.T @ W
    rhs = y @ W
    try:
        coef = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        return ols_residuals(y, W)
    resid = y - W @ coef
    n = y.shape[0]
    if np.max(np.abs(resid @ W)) / n > 1e-10:
        return ols_residuals(y, W)
    return resid


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class LogisticFit:
    coefficients: np.ndarray
    intercept: float
    converged: bool
    iterations: int
    log_likelihood: float

    def predict_logit(self, X):
        return np.asarray(X) @ self.coefficients + self.intercept

    def predict_proba(self, X):
        return _sigmoid(self.predict_logit(X))


def _log_likelihood(y, logit, ridge, beta):
    # Bernoulli log-likelihood with the (tiny) ridge term used by the solver
    ll = np.sum(y * logit - np.logaddexp(0.0, logit))
    return ll - 0.5 * ridge * float(beta @ beta)


def logistic_fit(D, X, max_iter=100, tol=1e-8, ridge=1e-6):
    """Newton/IRLS logistic regression of a binary target on X.

    The ridge penalty (default 1e-6, not applied to the intercept) keeps
    separable problems finite.  Step halving enforces a non-decreasing
    penalized log-likelihood.  Convergence means gradient max-norm < tol.
    """
    X = np.asarray(X, dtype=np.float64)
    D = np.asarray(D, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != D.shape[0]:
        raise ValueError("X must be n x q aligned with D")
    classes = np.unique(D)
    if not np.all(np.isin(classes, (0.0, 1.0))):
        raise ValueError("target must be binary 0/1")
    if classes.size < 2:
        raise ValueError("both target classes must be present")

    n, q = X.shape
    beta = np.zeros(q + 1)  # last entry is the intercept
    Xa = np.hstack([X, np.ones((n, 1))])
    pen = np.full(q + 1, ridge)
    pen[-1] = 0.0

    logit = Xa @ beta
    ll = _log_likelihood(D, logit, ridge, beta[:q])
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        p = _sigmoid(logit)
        grad = Xa.T @ (D - p) - pen * beta
        if np.max(np.abs(grad)) < tol:
            converged = True
            break
        w = np.clip(p * (1.0 - p), 1e-12, None)
        H = (Xa * w[:, None]).T @ Xa
        H[np.diag_indices_from(H)] += pen
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]

        scale = 1.0
        for _ in range(30):
            cand = beta + scale * step
            cand_logit = Xa @ cand
            cand_ll = _log_likelihood(D, cand_logit, ridge, cand[:q])
            if cand_ll >= ll - 1e-12:
                beta, logit, ll = cand, cand_logit, cand_ll
                break
            scale *= 0.5
        else:
            break  # no improving step; report best iterate

    return LogisticFit(
        coefficients=beta[:q].copy(),
        intercept=float(beta[q]),
        converged=converged,
        iterations=it,
        log_likelihood=float(ll),
    )
