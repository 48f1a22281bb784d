"""Linear algebra and statistical fitting primitives.

Conventions used throughout: sample standard deviations use the N-1
denominator; a column with sd below 1e-12 is treated as constant; principal
component loadings are sign-fixed so the first non-negligible entry of each
loading is positive, which keeps coefficients comparable across
cross-validation folds.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

CONSTANT_SD = 1e-12


class DegenerateStatWarning(UserWarning):
    """A statistic was requested on constant (zero-variance) input."""


class RankDeficiencyWarning(UserWarning):
    """Dependent design columns were dropped from a regression."""


# ---------------------------------------------------------------------------
# Standardization


@dataclass(frozen=True)
class Standardization:
    """Column means/sds learned from one matrix, reusable on new rows."""

    values: np.ndarray
    means: np.ndarray
    sds: np.ndarray
    constant: np.ndarray

    def apply(self, matrix: np.ndarray) -> np.ndarray:
        """Standardize new rows with the learned means/sds.

        Columns flagged constant map to all-zero, matching the training
        treatment."""
        return _apply_standardization(np.asarray(matrix, dtype=np.float64),
                                      self.means, self.sds, self.constant)


def _apply_standardization(matrix, means, sds, constant):
    safe = np.where(constant, 1.0, sds)
    z = (matrix - means) / safe
    if constant.any():
        z[:, constant] = 0.0
    return z


def standardize_columns(matrix) -> Standardization:
    """Center and scale each column to mean 0, sample sd 1.

    Columns with sd < 1e-12 are set to all-zero and flagged constant rather
    than raising.
    """
    x = np.asarray(matrix, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need a 2-D matrix with at least 2 rows")
    means = x.mean(axis=0)
    sds = x.std(axis=0, ddof=1)
    constant = sds < CONSTANT_SD
    values = _apply_standardization(x, means, sds, constant)
    return Standardization(values, means, sds, constant)


# ---------------------------------------------------------------------------
# PCA via singular value decomposition


@dataclass(frozen=True)
class PCABasis:
    """Principal component loadings for a centered matrix.

    ``loadings`` has orthonormal columns ordered by decreasing singular
    value; ``column_means`` records the centering offsets; ``k`` is the
    effective component count (requested count reduced to the numerical
    rank, kept in ``requested_k``).
    """

    loadings: np.ndarray
    singular_values: np.ndarray
    column_means: np.ndarray
    k: int
    requested_k: int

    def transform(self, matrix: np.ndarray) -> np.ndarray:
        """Project rows onto the component axes (scores)."""
        return (np.asarray(matrix, dtype=np.float64)
                - self.column_means) @ self.loadings


def _pca_full(matrix: np.ndarray) -> PCABasis:
    """Full-rank basis; components beyond the numerical rank are dropped."""
    x = np.asarray(matrix, dtype=np.float64)
    means = x.mean(axis=0)
    xc = x - means
    u, s, vt = np.linalg.svd(xc, full_matrices=False)
    if s.size and s[0] > 0:
        tol = s[0] * max(xc.shape) * np.finfo(np.float64).eps
        rank = int(np.sum(s > tol))
    else:
        rank = 0
    loadings = vt[:rank].T.copy()
    for j in range(rank):
        col = loadings[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            loadings[:, j] = -col
    return PCABasis(loadings, s[:rank].copy(), means, rank, rank)


def truncate_basis(basis: PCABasis, k: int) -> PCABasis:
    """Keep the leading min(k, rank) components of a basis."""
    if k < 1:
        raise ValueError(f"component count must be >= 1, got {k}")
    k_eff = min(k, basis.k)
    return PCABasis(basis.loadings[:, :k_eff], basis.singular_values[:k_eff],
                    basis.column_means, k_eff, k)


def pca_svd(matrix, k: int) -> PCABasis:
    """PCA of a (possibly uncentered) matrix via SVD.

    Centering is applied internally and recorded in ``column_means``. The
    score variance of component j equals singular_value_j**2 / (N - 1).
    """
    return truncate_basis(_pca_full(matrix), k)


# ---------------------------------------------------------------------------
# Regression


@dataclass(frozen=True)
class RegressionFit:
    """Fitted coefficients (intercept first) for a linear or logistic model.

    ``dropped_columns`` lists design columns (0 = intercept) that were
    linearly dependent on earlier ones; their coefficients are forced to 0.
    """

    coefficients: np.ndarray
    family: str
    converged: bool
    iterations: int
    dropped_columns: tuple = ()
    separated: bool = False
    loglik_trace: np.ndarray | None = None

    @property
    def intercept(self) -> float:
        return float(self.coefficients[0])


def _design(scores: np.ndarray) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim == 1:
        scores = scores[:, None]
    return np.hstack([np.ones((scores.shape[0], 1)), scores])


def _independent_columns(x: np.ndarray):
    """Greedy left-to-right split into (kept, dropped) column indices.

    A column is dropped when its residual against the span of previously
    kept columns is negligible, so trailing dependent columns lose out.
    """
    n, m = x.shape
    kept, dropped = [], []
    q = np.empty((n, 0))
    for j in range(m):
        col = x[:, j].astype(np.float64, copy=True)
        norm0 = np.linalg.norm(col)
        resid = col - q @ (q.T @ col)
        resid = resid - q @ (q.T @ resid)  # one reorthogonalization pass
        rnorm = np.linalg.norm(resid)
        if rnorm <= 1e-8 * max(norm0, 1.0):
            dropped.append(j)
        else:
            kept.append(j)
            q = np.hstack([q, (resid / rnorm)[:, None]])
    return kept, dropped


def _split_design(scores, n_min_extra=1):
    x = _design(scores)
    n, m = x.shape
    if n <= m - 1 + n_min_extra:
        raise ValueError(
            f"need more than {m - 1 + n_min_extra} observations to fit "
            f"{m - 1} predictors, got {n}"
        )
    if np.linalg.matrix_rank(x) == m:
        return x, list(range(m)), ()
    kept, dropped = _independent_columns(x)
    warnings.warn(
        "design columns dependent on earlier columns, coefficients "
        f"forced to 0: {dropped}", RankDeficiencyWarning, stacklevel=3)
    return x, kept, tuple(dropped)


def fit_ols(scores, y) -> RegressionFit:
    """Least-squares fit of y on an intercept plus score columns.

    Dependent design columns are dropped (coefficient 0) with a warning, so
    e.g. an all-zero column leaves the fitted values unchanged.
    """
    y = np.asarray(y, dtype=np.float64)
    x, kept, dropped = _split_design(scores)
    beta = np.zeros(x.shape[1])
    sol, *_ = np.linalg.lstsq(x[:, kept], y, rcond=None)
    beta[kept] = sol
    return RegressionFit(beta, "linear", True, 1, dropped_columns=dropped)


def _stable_expit(eta: np.ndarray) -> np.ndarray:
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _bernoulli_loglik(eta: np.ndarray, y: np.ndarray) -> float:
    # sum_i  y_i eta_i - log(1 + exp(eta_i)), computed stably
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def fit_logistic_irls(scores, y, max_iter: int = 50,
                      tol: float = 1e-8,
                      separation_cap: float = 1e4) -> RegressionFit:
    """Logistic regression by iteratively reweighted least squares.

    Each Newton step is halved until the Bernoulli log-likelihood does not
    decrease, so the recorded ``loglik_trace`` is non-decreasing. The fit is
    converged when the gradient infinity norm drops to ``tol``. (Quasi-)
    perfect separation, detected as the coefficient norm exceeding
    ``separation_cap`` or the log-likelihood reaching 0, is flagged and
    returned with ``converged=False``.
    """
    y = np.asarray(y, dtype=np.float64)
    classes = np.unique(y)
    if not np.all(np.isin(classes, (0.0, 1.0))):
        raise ValueError("y must be coded 0/1")
    if classes.size < 2:
        raise ValueError("both classes must be present in y")
    x, kept, dropped = _split_design(scores, n_min_extra=0)
    xk = x[:, kept]
    beta_k = np.zeros(len(kept))
    eta = xk @ beta_k
    ll = _bernoulli_loglik(eta, y)
    trace = [ll]
    converged = False
    separated = False
    iterations = 0
    for _ in range(max_iter):
        mu = _stable_expit(eta)
        if np.linalg.norm(beta_k) > separation_cap or ll > -1e-6:
            separated = True
            break
        if np.max(np.abs(xk.T @ (y - mu))) <= tol:
            converged = True
            break
        w = np.maximum(mu * (1.0 - mu), 1e-10)
        hess = xk.T @ (xk * w[:, None])
        try:
            step = np.linalg.solve(hess, xk.T @ (y - mu))
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(hess, xk.T @ (y - mu), rcond=None)
        lam = 1.0
        improved = False
        for _ in range(30):
            cand = beta_k + lam * step
            ll_new = _bernoulli_loglik(xk @ cand, y)
            if ll_new >= ll:
                improved = True
                break
            lam *= 0.5
        if not improved:
            break  # stalled at the numerical optimum along this direction
        iterations += 1
        beta_k = cand
        eta = xk @ cand
        ll = ll_new
        trace.append(ll)
    if not converged and not separated:
        # final state may satisfy either criterion
        if np.linalg.norm(beta_k) > separation_cap or ll > -1e-6:
            separated = True
        elif np.max(np.abs(xk.T @ (y - _stable_expit(eta)))) <= tol:
            converged = True
    beta = np.zeros(x.shape[1])
    beta[kept] = beta_k
    return RegressionFit(beta, "logistic", converged and not separated,
                         iterations, dropped_columns=dropped,
                         separated=separated,
                         loglik_trace=np.asarray(trace))


# ---------------------------------------------------------------------------
# Association statistics


def pearson(x, y) -> float:
    """Pearson correlation; returns 0 (with a warning) on constant input."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xc = x - x.mean()
    yc = y - y.mean()
    dxx = float(xc @ xc)
    dyy = float(yc @ yc)
    n = x.size
    if dxx < CONSTANT_SD ** 2 * (n - 1) or dyy < CONSTANT_SD ** 2 * (n - 1):
        warnings.warn("pearson on constant input, returning 0",
                      DegenerateStatWarning, stacklevel=2)
        return 0.0
    r = float(xc @ yc) / np.sqrt(dxx * dyy)
    return float(min(1.0, max(-1.0, r)))


def column_association(matrix, y, stat: str = "pearson"):
    """Per-column association of matrix columns with y.

    Returns (values, constant_mask); constant columns get value 0. For
    ``pearson`` the value is the signed correlation; for ``t_test`` it is
    the absolute pooled-variance two-sample t statistic, which requires a
    binary 0/1 y with both class sizes >= 2.
    """
    x = np.asarray(matrix, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(y, dtype=np.float64)
    n = x.shape[0]
    if n < 3:
        raise ValueError("need at least 3 observations")
    sds = x.std(axis=0, ddof=1)
    constant = sds < CONSTANT_SD
    if stat == "pearson":
        xc = x - x.mean(axis=0)
        yc = y - y.mean()
        dyy = float(yc @ yc)
        if dyy < CONSTANT_SD ** 2 * (n - 1):
            return np.zeros(x.shape[1]), np.ones(x.shape[1], dtype=bool)
        dxy = xc.T @ yc
        dxx = np.einsum("ij,ij->j", xc, xc)
        vals = np.zeros(x.shape[1])
        ok = ~constant
        vals[ok] = dxy[ok] / np.sqrt(dxx[ok] * dyy)
        np.clip(vals, -1.0, 1.0, out=vals)
        return vals, constant
    if stat == "t_test":
        g1 = y == 1.0
        g0 = y == 0.0
        if not np.all(g1 | g0):
            raise ValueError("t_test requires a binary 0/1 y")
        n1, n0 = int(g1.sum()), int(g0.sum())
        if n1 < 2 or n0 < 2:
            raise ValueError("t_test requires both class sizes >= 2")
        m1 = x[g1].mean(axis=0)
        m0 = x[g0].mean(axis=0)
        v1 = x[g1].var(axis=0, ddof=1)
        v0 = x[g0].var(axis=0, ddof=1)
        sp2 = ((n1 - 1) * v1 + (n0 - 1) * v0) / (n1 + n0 - 2)
        denom = np.sqrt(sp2 * (1.0 / n1 + 1.0 / n0))
        diff = np.abs(m1 - m0)
        vals = np.zeros(x.shape[1])
        ok = denom > CONSTANT_SD
        vals[ok] = diff[ok] / denom[ok]
        # separated constant groups: infinite evidence, never "constant"
        vals[(~ok) & (diff > CONSTANT_SD)] = np.inf
        vals[constant] = 0.0
        return vals, constant
    raise ValueError(f"unknown association stat {stat!r}")


def association_stat(feature_column, y, stat: str = "pearson") -> float:
    """Scalar association of one feature with y (see column_association)."""
    vals, constant = column_association(
        np.asarray(feature_column, dtype=np.float64)[:, None], y, stat)
    if constant[0]:
        warnings.warn(f"{stat} on a constant feature, returning 0",
                      DegenerateStatWarning, stacklevel=2)
    return float(vals[0])


def threshold_select(values, constant, stat: str, threshold: float) -> np.ndarray:
    """Column indices passing the screening rule.

    Pearson screens on |r| >= threshold (so negatively associated columns
    survive); t statistics are already absolute. Constant columns are never
    selected, so threshold 0 selects exactly the non-constant columns.
    """
    magnitude = np.abs(values) if stat == "pearson" else values
    return np.flatnonzero(~constant & (magnitude >= threshold))
