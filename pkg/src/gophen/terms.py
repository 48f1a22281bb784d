"""Feature-to-term aggregation and coefficient projection.

A term column is the mean of its member features' column-standardized
expression values (standardization over subjects), so term columns are
scale-free and directly comparable across folds. Coefficients fitted in
term space are "joint"; feature-level coefficients averaged per term after
the fact are "marginal" and are not comparable to joint ones.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .data import Dataset, TermMapping
from .numerics import standardize_columns

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TermExpressionMatrix:
    """Subjects x terms matrix of aggregated expression.

    ``dropped_terms`` reports terms that lost all members (side channel,
    nothing is removed silently).
    """

    subject_ids: tuple
    term_ids: tuple
    values: np.ndarray
    dropped_terms: tuple = ()


@dataclass(frozen=True)
class TermCoefficients:
    """Term-level coefficient vector, either joint or marginal."""

    term_ids: tuple
    coefficients: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in ("joint", "marginal"):
            raise ValueError(f"kind must be joint or marginal, got {self.kind!r}")
        coefs = np.asarray(self.coefficients, dtype=np.float64)
        if coefs.shape != (len(self.term_ids),):
            raise ValueError("coefficient vector does not match term_ids")
        object.__setattr__(self, "coefficients", coefs)


def aggregate_columns(matrix: np.ndarray, member_columns) -> np.ndarray:
    """Mean-combine matrix columns into one column per index group."""
    matrix = np.asarray(matrix, dtype=np.float64)
    weights = np.zeros((matrix.shape[1], len(member_columns)))
    for t, cols in enumerate(member_columns):
        weights[cols, t] = 1.0 / len(cols)
    return matrix @ weights


def restrict_members(member_columns, keep_mask: np.ndarray):
    """Intersect each member index group with a boolean column mask.

    Returns (surviving group positions, restricted member_columns).
    """
    positions, restricted = [], []
    for t, cols in enumerate(member_columns):
        sub = cols[keep_mask[cols]]
        if sub.size:
            positions.append(t)
            restricted.append(sub)
    return positions, tuple(restricted)


def aggregate_term_expression(dataset: Dataset, mapping: TermMapping,
                              member_subset=None) -> TermExpressionMatrix:
    """Aggregate a dataset to term level.

    Each term column is the mean of its members' standardized expression
    columns. With ``member_subset`` (a set of feature ids), members outside
    the subset are ignored first; terms left with no member are dropped and
    reported via ``dropped_terms`` and the module logger.
    """
    resolution = mapping.validate_against(dataset)
    if resolution.missing_features:
        logger.warning("mapping names %d features absent from the dataset",
                       sum(len(v) for v in resolution.missing_features.values()))
    term_ids = list(resolution.term_ids)
    member_columns = list(resolution.member_columns)
    dropped = list(resolution.dropped_terms)
    if member_subset is not None:
        subset = set(member_subset)
        keep_mask = np.asarray(
            [f in subset for f in dataset.feature_ids], dtype=bool)
        positions, member_columns = restrict_members(member_columns, keep_mask)
        surviving = set(positions)
        dropped += [t for i, t in enumerate(term_ids) if i not in surviving]
        term_ids = [term_ids[i] for i in positions]
    if not term_ids:
        raise ValueError("no terms left after restriction")
    if dropped:
        logger.warning("dropped %d terms with no member features: %s",
                       len(dropped), dropped[:10])
    z = standardize_columns(dataset.expression).values
    values = aggregate_columns(z, member_columns)
    return TermExpressionMatrix(dataset.subject_ids, tuple(term_ids),
                                values, tuple(dropped))


def project_gene_to_term_coefficients(feature_coefs, mapping: TermMapping,
                                      feature_ids) -> TermCoefficients:
    """Marginal term coefficients: the mean of member-feature coefficients.

    ``feature_coefs`` must be aligned to ``feature_ids`` (dataset feature
    order). A term with no member among the feature ids is an error.
    """
    coefs = np.asarray(feature_coefs, dtype=np.float64)
    if coefs.shape != (len(feature_ids),):
        raise ValueError("feature_coefs is not aligned to feature_ids")
    col = {f: i for i, f in enumerate(feature_ids)}
    term_ids, values = [], []
    for term, members in mapping.terms.items():
        idx = [col[m] for m in members if m in col]
        if not idx:
            raise ValueError(
                f"term {term!r} has no member among the supplied features")
        term_ids.append(term)
        values.append(float(np.mean(coefs[idx])))
    return TermCoefficients(tuple(term_ids), np.asarray(values), "marginal")
