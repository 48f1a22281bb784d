"""Leakage-free cross-validated model grids over the staged SPCA estimator.

``run_cv`` fits one model specification across all folds and collects the
out-of-fold predictions, their correlation with the observed phenotype, and
the fold-averaged (consolidated) coefficient vector. ``grid_search`` sweeps
a list of specifications over the same folds, reusing fold-level
intermediates so a 1000+ cell grid stays cheap; results are bit-identical
to running each cell alone.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .data import Dataset, FoldAssignment, InputError, TermMapping
from .estimator import (
    FAMILIES,
    SCREEN_STATS,
    STAGES,
    ModelParams,
    StageFit,
    _fit_model,
    _predict_model,
    _public_basis,
)
from .numerics import (
    PCABasis,
    RegressionFit,
    column_association,
    pearson,
    threshold_select,
)
from .terms import TermCoefficients

logger = logging.getLogger(__name__)

LABELS_RESPONSE = "labels"


@dataclass(frozen=True)
class ModelSpec:
    """One grid point: integration stage, screening rule, component count,
    response family and phenotype definition name."""

    stage: str
    screen_stat: str
    threshold: float
    n_components: int
    family: str
    phenotype: str

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"stage must be one of {STAGES}, got {self.stage!r}")
        if self.screen_stat not in SCREEN_STATS:
            raise ValueError(
                f"screen_stat must be one of {SCREEN_STATS}, "
                f"got {self.screen_stat!r}")
        if self.family not in FAMILIES:
            raise ValueError(
                f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.screen_stat == "t_test" and self.family != "logistic":
            raise ValueError("t_test screening requires the logistic family")
        if not self.threshold > 0:
            raise ValueError(f"threshold must be positive, got {self.threshold}")
        if self.n_components < 1:
            raise ValueError(
                f"n_components must be >= 1, got {self.n_components}")

    def params(self) -> ModelParams:
        return ModelParams(self.stage, self.screen_stat, float(self.threshold),
                           int(self.n_components), self.family)


@dataclass(frozen=True)
class FoldFit:
    """Per-fold fit summary: what was selected, the component basis actually
    used, the regression, and the back-mapped coefficients."""

    fold: int | None
    selected_ids: tuple
    basis: PCABasis | None
    regression: RegressionFit | None
    coef_ids: tuple
    coef_values: np.ndarray
    degenerate: bool
    train_mean: float
    k_used: int


@dataclass(frozen=True)
class CVResult:
    """Cross-validated outcome of one model specification.

    ``oof_predictions[i]`` comes from the model trained with subject i's
    fold held out; ``predictive_correlation`` is its Pearson correlation
    with the observed response. ``consolidated_term_coefs`` is the per-term
    average of fold coefficients (terms unselected in a fold contribute 0);
    for go_end the joint space is features, so the feature-space average is
    in ``consolidated_feature_coefs`` instead.
    """

    spec: ModelSpec
    oof_predictions: np.ndarray | None
    predictive_correlation: float
    fold_fits: tuple
    consolidated_term_coefs: TermCoefficients | None
    consolidated_feature_coefs: np.ndarray | None
    degenerate_folds: tuple
    n_folds: int


def screen_features(train_matrix, y_train, stat: str, threshold: float):
    """Indices of columns whose association with y_train passes threshold.

    Computed on training rows only; an empty selection is a valid outcome.
    """
    vals, const = column_association(train_matrix, y_train, stat)
    return threshold_select(vals, const, stat, threshold)


def response_vector(dataset: Dataset, spec: ModelSpec):
    """The modeling response and its cache key for a spec.

    The linear family predicts the named phenotype; the logistic family
    predicts the binary labels (coded CFS=1, NF=0), with the phenotype name
    kept as scenario metadata.
    """
    if spec.family == "logistic":
        if dataset.binary_labels is None:
            raise InputError("logistic family requires binary labels")
        return (dataset.binary_labels == "CFS").astype(np.float64), LABELS_RESPONSE
    if spec.phenotype not in dataset.phenotypes:
        raise InputError(
            f"phenotype {spec.phenotype!r} not in dataset "
            f"(have {sorted(dataset.phenotypes)})")
    return dataset.phenotypes[spec.phenotype], spec.phenotype


def _resolve(dataset, mapping, spec, resolution=None):
    if spec.stage == "go_end":
        return None
    if resolution is not None:
        return resolution
    if mapping is None:
        raise InputError(f"stage {spec.stage} requires a term mapping")
    res = mapping.validate_against(dataset)
    if not res.term_ids:
        raise InputError("no mapping term has members in the dataset")
    return res


def _fold_fit(fold, state: StageFit) -> FoldFit:
    return FoldFit(fold, state.selected_ids, _public_basis(state),
                   state.regression, state.coef_ids, state.coef_values,
                   state.degenerate, state.train_mean, state.k_used)


def fit_fold(dataset: Dataset, mapping: TermMapping | None, spec: ModelSpec,
             train_rows, *, _resolution=None) -> FoldFit:
    """Fit one fold's model from the given training rows only."""
    y, ykey = response_vector(dataset, spec)
    res = _resolve(dataset, mapping, spec, _resolution)
    train = np.asarray(train_rows, dtype=np.intp)
    term_ids = res.term_ids if res is not None else None
    member_columns = res.member_columns if res is not None else None
    state = _fit_model(dataset.expression[train], y[train], spec.params(),
                       term_ids, member_columns, ykey=ykey)
    return _fold_fit(None, state)


def run_cv(dataset: Dataset, mapping: TermMapping | None, spec: ModelSpec,
           folds: FoldAssignment, *, keep_fold_fits=True,
           _resolution=None, _shared=None) -> CVResult:
    """Cross-validate one model specification.

    Test rows are transformed with train-derived statistics only. Folds
    whose screening selects nothing (or whose training labels are
    one-class) are marked degenerate and predict the training mean.
    """
    if folds.n_subjects != dataset.n_subjects:
        raise InputError(
            f"fold assignment covers {folds.n_subjects} subjects, dataset "
            f"has {dataset.n_subjects}")
    if folds.k < 2:
        raise InputError("need at least 2 folds")
    y, ykey = response_vector(dataset, spec)
    res = _resolve(dataset, mapping, spec, _resolution)
    term_ids = res.term_ids if res is not None else None
    member_columns = res.member_columns if res is not None else None
    params = spec.params()
    x = dataset.expression
    oof = np.empty(dataset.n_subjects)
    states = []
    for fold, train, test in folds.folds():
        train_cache, test_cache = (
            _shared[fold] if _shared is not None else (None, None))
        state = _fit_model(x[train], y[train], params, term_ids,
                           member_columns, cache=train_cache, ykey=ykey)
        oof[test] = _predict_model(state, x[test], cache=test_cache)
        states.append(state)
    degenerate = tuple(f for f, s in zip(range(1, folds.k + 1), states)
                       if s.degenerate)
    if len(degenerate) == folds.k:
        # no fold fit a model; the fold-mean staircase carries a spurious
        # anti-correlation with y, so no predictive correlation is claimed
        correlation = 0.0
    else:
        correlation = pearson(oof, y)
    if spec.stage == "go_end":
        total = np.zeros(dataset.n_features)
        for state in states:
            total[state.coef_index] += state.coef_values
        term_coefs = None
        feature_coefs = total / folds.k
    else:
        total = np.zeros(len(term_ids))
        for state in states:
            total[state.coef_index] += state.coef_values
        term_coefs = TermCoefficients(term_ids, total / folds.k, "joint")
        feature_coefs = None
    fold_fits = (tuple(_fold_fit(f + 1, s) for f, s in enumerate(states))
                 if keep_fold_fits else ())
    return CVResult(spec, oof, float(correlation), fold_fits, term_coefs,
                    feature_coefs, degenerate, folds.k)


def grid_search(dataset: Dataset, mapping: TermMapping | None, grid,
                folds: FoldAssignment, *, keep_fold_fits=False):
    """Run every spec in the grid over the same folds, in grid order.

    Fold-level intermediates (standardization, aggregation, screening
    statistics, component bases) are shared across specs, which changes
    nothing numerically. Per-fold bases/regressions are dropped from the
    results by default to keep large grids small; pass
    ``keep_fold_fits=True`` to retain them.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("empty model grid")
    needs_mapping = any(s.stage != "go_end" for s in grid)
    resolution = mapping.validate_against(dataset) if (
        mapping is not None and needs_mapping) else None
    if resolution is not None and not resolution.term_ids:
        raise InputError("no mapping term has members in the dataset")
    shared = {fold: ({}, {}) for fold in range(1, folds.k + 1)}
    results = []
    for i, spec in enumerate(grid):
        results.append(run_cv(dataset, mapping, spec, folds,
                              keep_fold_fits=keep_fold_fits,
                              _resolution=resolution, _shared=shared))
        if (i + 1) % 250 == 0:
            logger.info("grid progress: %d/%d specs", i + 1, len(grid))
    return results


# ---------------------------------------------------------------------------
# Binary classification from continuous predictions


def _binary_labels_to_01(labels) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.dtype.kind in "UO":
        y = (labels == "CFS").astype(np.float64)
        if not np.all((labels == "CFS") | (labels == "NF")):
            raise InputError("labels must be 'CFS' or 'NF'")
    else:
        y = labels.astype(np.float64)
        if not np.all(np.isin(y, (0.0, 1.0))):
            raise InputError("numeric labels must be 0/1")
    if np.unique(y).size < 2:
        raise InputError("labels contain a single class")
    return y


def threshold_classify(predictions, labels, cutoff_rule="best_split") -> float:
    """Accuracy of classifying CFS (high) vs NF (low) by a prediction cutoff.

    ``best_split`` scans the midpoints of the sorted predictions plus the
    two degenerate all-one-class cutoffs, maximizing accuracy; ties keep
    the lower cutoff. A float ``cutoff_rule`` is used as a fixed cutoff.
    Predictions strictly above the cutoff classify as CFS.
    """
    preds = np.asarray(predictions, dtype=np.float64)
    y = _binary_labels_to_01(labels)
    if preds.shape != y.shape:
        raise InputError("predictions and labels have different lengths")
    if isinstance(cutoff_rule, str):
        if cutoff_rule != "best_split":
            raise ValueError(f"unknown cutoff rule {cutoff_rule!r}")
        uniq = np.unique(preds)
        candidates = np.concatenate(
            [[uniq[0] - 1.0], (uniq[:-1] + uniq[1:]) / 2.0, [uniq[-1] + 1.0]])
        best = -1.0
        for c in candidates:
            acc = float(np.mean((preds > c) == (y == 1.0)))
            if acc > best:
                best = acc
        return best
    c = float(cutoff_rule)
    return float(np.mean((preds > c) == (y == 1.0)))


# ---------------------------------------------------------------------------
# Grid construction and configuration files


def default_thresholds():
    """The 19 default pearson screening cutoffs 0.05, 0.075, ..., 0.5."""
    return [round(0.05 + 0.025 * i, 10) for i in range(19)]


def default_components():
    """The 54 default component counts 1..54."""
    return list(range(1, 55))


def build_grid(stage: str, phenotype: str, family: str = "linear",
               screen_stat: str = "pearson", thresholds=None,
               components=None):
    """All (threshold, n_components) specs for one scenario, threshold-major.

    The defaults give the 19 x 54 = 1026 cell grid.
    """
    if thresholds is None:
        thresholds = default_thresholds()
    if components is None:
        components = default_components()
    return [ModelSpec(stage, screen_stat, t, k, family, phenotype)
            for t in thresholds for k in components]


def parse_key_value_config(path) -> dict:
    """Parse a ``key = value`` text file; '#' starts a comment."""
    config = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InputError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            config[key.strip()] = value.strip()
    return config


def parse_int_list(text: str):
    """Parse '1..54' (inclusive range) or a comma list of integers."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(v) for v in text.split(",") if v.strip()]


def parse_float_list(text: str):
    """Parse 'default' (the standard cutoffs) or a comma list of floats."""
    text = text.strip()
    if text == "default":
        return default_thresholds()
    return [float(v) for v in text.split(",") if v.strip()]


def parse_str_list(text: str):
    return [v.strip() for v in text.split(",") if v.strip()]
