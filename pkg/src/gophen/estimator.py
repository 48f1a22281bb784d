"""Supervised principal component model with staged term integration.

One fitted model is: standardize columns (train statistics), screen by
association with the outcome, optionally aggregate features to term level,
PCA on the surviving columns, then a linear or logistic regression on the
leading scores. Term information can enter at three stages:

``go_start``
    aggregate all features to term columns first, screen the *terms*,
    PCA in term space; coefficients live on selected terms (joint).
``go_mid``
    screen the *features* first, aggregate only the selected features to
    term columns, PCA over all surviving terms; coefficients live on the
    surviving terms (joint).
``go_end``
    screen the features, PCA in feature space; coefficients live on the
    selected features, and any term view is a post-hoc marginal projection.

Every statistic is computed from the rows passed to ``fit`` alone, so
fitting on training folds and predicting held-out folds is leakage-free by
construction.

The module-private ``_fit_model``/``_predict_model`` pair is the single
implementation; the public estimator and the cross-validation pipeline both
call it. The optional cache argument only memoizes intermediate results of
these same functions, so cached and uncached paths are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .numerics import (
    PCABasis,
    RegressionFit,
    Standardization,
    _pca_full,
    _stable_expit,
    column_association,
    fit_logistic_irls,
    fit_ols,
    standardize_columns,
    threshold_select,
    truncate_basis,
)
from .terms import aggregate_columns, restrict_members

STAGES = ("go_start", "go_mid", "go_end")
FAMILIES = ("linear", "logistic")
SCREEN_STATS = ("pearson", "t_test")


class ModelParams(NamedTuple):
    stage: str
    screen_stat: str
    threshold: float
    n_components: int
    family: str
    max_iter: int = 50
    tol: float = 1e-8


@dataclass(frozen=True)
class StageFit:
    """Everything needed to predict new rows and to read off coefficients.

    ``coef_ids``/``coef_values`` hold the fitted model mapped back from
    component space: term ids for go_start/go_mid (joint coefficients),
    feature column indices for go_end. A degenerate fit (empty screen, rank
    zero, or a one-class training fold) predicts the training mean.
    """

    params: ModelParams
    std: Standardization | None
    agg_cols: tuple | None
    pca_input_idx: np.ndarray | None
    selkey: tuple | None
    selected_ids: tuple
    basis_full: PCABasis | None
    k_used: int
    regression: RegressionFit | None
    coef_ids: tuple
    coef_values: np.ndarray
    coef_index: np.ndarray
    degenerate: bool
    train_mean: float


def _cached(cache, key, fn):
    if cache is None:
        return fn()
    if key not in cache:
        cache[key] = fn()
    return cache[key]


def _degenerate(params, std, y) -> StageFit:
    return StageFit(params, std, None, None, None, (), None, 0, None,
                    (), np.zeros(0), np.zeros(0, dtype=np.intp), True,
                    float(np.mean(y)))


def _fit_model(x, y, params: ModelParams, term_ids=None, member_columns=None,
               cache=None, ykey=None) -> StageFit:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n_train = x.shape[0]
    std = _cached(cache, "std", lambda: standardize_columns(x))
    z = std.values
    if params.family == "logistic" and np.unique(y).size < 2:
        return _degenerate(params, std, y)
    if params.stage in ("go_start", "go_mid") and term_ids is None:
        raise ValueError(f"stage {params.stage} requires a term mapping")

    if params.stage == "go_start":
        agg = _cached(cache, "agg_all",
                      lambda: aggregate_columns(z, member_columns))
        vals, const = _cached(
            cache, ("stats", "term", params.screen_stat, ykey),
            lambda: column_association(agg, y, params.screen_stat))
        sel = threshold_select(vals, const, params.screen_stat, params.threshold)
        if sel.size == 0:
            return _degenerate(params, std, y)
        selkey = tuple(sel.tolist())
        basis = _cached(cache, ("pca", "term", selkey),
                        lambda: _pca_full(agg[:, sel]))
        scores = _cached(cache, ("scores", "term", selkey),
                         lambda: basis.transform(agg[:, sel]))
        selected_ids = tuple(term_ids[i] for i in sel)
        coef_ids = selected_ids
        coef_index = sel
        agg_cols = tuple(member_columns)
        pca_input_idx = sel
    elif params.stage == "go_mid":
        vals, const = _cached(
            cache, ("stats", "feat", params.screen_stat, ykey),
            lambda: column_association(z, y, params.screen_stat))
        fsel = threshold_select(vals, const, params.screen_stat, params.threshold)
        if fsel.size == 0:
            return _degenerate(params, std, y)
        selkey = tuple(fsel.tolist())

        def _restricted():
            keep = np.zeros(x.shape[1], dtype=bool)
            keep[fsel] = True
            positions, rcols = restrict_members(member_columns, keep)
            return positions, rcols, aggregate_columns(z, rcols)

        positions, rcols, agg = _cached(cache, ("agg_mid", selkey), _restricted)
        if not positions:
            return _degenerate(params, std, y)
        basis = _cached(cache, ("pca", "mid", selkey), lambda: _pca_full(agg))
        scores = _cached(cache, ("scores", "mid", selkey),
                         lambda: basis.transform(agg))
        selected_ids = tuple(int(i) for i in fsel)
        coef_ids = tuple(term_ids[i] for i in positions)
        coef_index = np.asarray(positions, dtype=np.intp)
        agg_cols = rcols
        pca_input_idx = np.arange(len(positions))
    elif params.stage == "go_end":
        vals, const = _cached(
            cache, ("stats", "feat", params.screen_stat, ykey),
            lambda: column_association(z, y, params.screen_stat))
        fsel = threshold_select(vals, const, params.screen_stat, params.threshold)
        if fsel.size == 0:
            return _degenerate(params, std, y)
        selkey = tuple(fsel.tolist())
        basis = _cached(cache, ("pca", "feat", selkey),
                        lambda: _pca_full(z[:, fsel]))
        scores = _cached(cache, ("scores", "feat", selkey),
                         lambda: basis.transform(z[:, fsel]))
        selected_ids = tuple(int(i) for i in fsel)
        coef_ids = selected_ids
        coef_index = fsel
        agg_cols = None
        pca_input_idx = fsel
    else:
        raise ValueError(f"unknown stage {params.stage!r}")

    k_used = min(params.n_components, n_train - 2, basis.k)
    if k_used < 1:
        return _degenerate(params, std, y)
    design = scores[:, :k_used]
    if params.family == "linear":
        regression = fit_ols(design, y)
    else:
        regression = fit_logistic_irls(design, y, max_iter=params.max_iter,
                                       tol=params.tol)
    coef_values = basis.loadings[:, :k_used] @ regression.coefficients[1:]
    return StageFit(params, std, agg_cols, pca_input_idx, selkey,
                    selected_ids, basis, k_used, regression, coef_ids,
                    coef_values, coef_index, False, float(np.mean(y)))


def _predict_model(state: StageFit, x, cache=None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if state.degenerate:
        return np.full(x.shape[0], state.train_mean)
    z = _cached(cache, "std", lambda: state.std.apply(x))
    stage = state.params.stage
    if stage == "go_start":
        agg = _cached(cache, "agg_all",
                      lambda: aggregate_columns(z, state.agg_cols))
        tscores = _cached(
            cache, ("tscores", "term", state.selkey),
            lambda: state.basis_full.transform(agg[:, state.pca_input_idx]))
    elif stage == "go_mid":
        agg = _cached(cache, ("agg_mid", state.selkey),
                      lambda: aggregate_columns(z, state.agg_cols))
        tscores = _cached(cache, ("tscores", "mid", state.selkey),
                          lambda: state.basis_full.transform(agg))
    else:
        tscores = _cached(
            cache, ("tscores", "feat", state.selkey),
            lambda: state.basis_full.transform(z[:, state.pca_input_idx]))
    beta = state.regression.coefficients
    eta = beta[0] + tscores[:, :state.k_used] @ beta[1:]
    if state.params.family == "logistic":
        return _stable_expit(eta)
    return eta


def _public_basis(state: StageFit) -> PCABasis | None:
    """The basis actually used by the model (leading k_used components)."""
    if state.basis_full is None:
        return None
    return truncate_basis(state.basis_full, state.k_used)


class SupervisedPCARegressor(BaseEstimator):
    """Scikit-learn style estimator around the staged supervised-PCA model.

    Parameters
    ----------
    stage : {"go_start", "go_mid", "go_end"}
        Where term information enters the pipeline.
    screen_stat : {"pearson", "t_test"}
        Association statistic for the supervised screening step; t_test
        requires the logistic family.
    threshold : float
        Screening cutoff (|r| for pearson, |t| for t_test).
    n_components : int
        Requested principal components; capped at the numerical rank and at
        n_train - 2, the effective count is ``n_components_``.
    family : {"linear", "logistic"}
        Response family. Logistic expects y coded 0/1 and predicts the
        class-1 probability.
    mapping : dict, optional
        Term id -> sequence of feature column indices. Required for
        go_start/go_mid, ignored by go_end.
    max_iter, tol : logistic solver controls.

    After ``fit``: ``state_`` (full fitted state), ``coef_ids_`` and
    ``coef_`` (back-mapped coefficients: term ids for go_start/go_mid,
    feature column indices for go_end), ``selected_ids_``,
    ``n_components_`` and ``degenerate_``.
    """

    def __init__(self, stage="go_start", screen_stat="pearson", threshold=0.1,
                 n_components=2, family="linear", mapping=None, max_iter=50,
                 tol=1e-8):
        self.stage = stage
        self.screen_stat = screen_stat
        self.threshold = threshold
        self.n_components = n_components
        self.family = family
        self.mapping = mapping
        self.max_iter = max_iter
        self.tol = tol

    def _params(self) -> ModelParams:
        if self.stage not in STAGES:
            raise ValueError(f"stage must be one of {STAGES}, got {self.stage!r}")
        if self.screen_stat not in SCREEN_STATS:
            raise ValueError(
                f"screen_stat must be one of {SCREEN_STATS}, got {self.screen_stat!r}")
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.screen_stat == "t_test" and self.family != "logistic":
            raise ValueError("t_test screening requires the logistic family")
        if self.threshold < 0:
            raise ValueError("threshold must be non-negative")
        if self.n_components < 1:
            raise ValueError("n_components must be >= 1")
        return ModelParams(self.stage, self.screen_stat, float(self.threshold),
                           int(self.n_components), self.family,
                           int(self.max_iter), float(self.tol))

    def fit(self, X, y):
        params = self._params()
        X, y = check_X_y(X, y, dtype=np.float64)
        term_ids = member_columns = None
        if self.mapping is not None:
            term_ids = tuple(self.mapping)
            member_columns = tuple(
                np.asarray(cols, dtype=np.intp) for cols in self.mapping.values())
        self.state_ = _fit_model(X, y, params, term_ids, member_columns)
        self.n_features_in_ = X.shape[1]
        self.coef_ids_ = self.state_.coef_ids
        self.coef_ = self.state_.coef_values
        self.selected_ids_ = self.state_.selected_ids
        self.n_components_ = self.state_.k_used
        self.degenerate_ = self.state_.degenerate
        return self

    def predict(self, X):
        check_is_fitted(self, "state_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return _predict_model(self.state_, X)
