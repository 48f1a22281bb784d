"""Consensus meta-analysis over cross-validated model grids.

For each scenario (phenotype definition x term-integration stage) the Best
model is the grid argmax of predictive correlation; the Alternate model is
a near-best model re-chosen to maximize coefficient agreement across all
scenarios. The report collects pairwise coefficient correlations, top-
fraction term overlaps, and the term list common to every Alternate model.

go_end models carry marginal (feature-averaged) term coefficients that are
not comparable to joint ones, so they are barred from the consensus; they
can still be inspected via their own consolidated coefficients.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .numerics import CONSTANT_SD, DegenerateStatWarning
from .terms import TermCoefficients

CONSENSUS_STAGES = ("go_start", "go_mid")

EXHAUSTIVE_LIMIT = 10 ** 6


@dataclass(frozen=True)
class Scenario:
    """One consensus cell: a phenotype definition at an integration stage."""

    phenotype: str
    stage: str

    def __post_init__(self):
        if self.stage not in CONSENSUS_STAGES:
            raise ValueError(
                f"consensus scenarios use stages {CONSENSUS_STAGES}, "
                f"got {self.stage!r} (go_end coefficients are marginal and "
                f"not comparable)")

    @property
    def label(self) -> str:
        return f"{self.phenotype}/{self.stage}"


@dataclass(frozen=True)
class ConsensusReport:
    """Chosen models plus the agreement measures between them.

    ``coef_correlation`` covers all Best/Alt models (diagonal 1);
    ``top_overlap`` counts shared top-fraction terms between the Alt models
    (diagonal = own top-set size, bounded by floor(q*T)).
    """

    models: tuple
    model_labels: tuple
    coef_correlation: np.ndarray
    predictive_correlations: np.ndarray
    alt_labels: tuple
    top_overlap: np.ndarray
    common_terms: tuple
    q: float
    delta: float
    zero_variance_models: tuple = ()


def _term_coefs(model) -> TermCoefficients:
    if isinstance(model, TermCoefficients):
        coefs = model
    else:
        coefs = model.consolidated_term_coefs
        if coefs is None:
            raise ValueError(
                "model has no joint term coefficients (go_end results are "
                "excluded from the consensus)")
    if coefs.kind != "joint":
        raise ValueError(
            "marginal term coefficients are not comparable to joint ones "
            "and are excluded from the consensus")
    return coefs


def _term_universe(coef_list):
    universe = {}
    for coefs in coef_list:
        for t in coefs.term_ids:
            universe.setdefault(t, len(universe))
    return universe


def _full_vectors(coef_list, universe) -> np.ndarray:
    out = np.zeros((len(coef_list), len(universe)))
    for i, coefs in enumerate(coef_list):
        idx = [universe[t] for t in coefs.term_ids]
        out[i, idx] = coefs.coefficients
    return out


def select_best(results):
    """The result with the highest predictive correlation.

    Ties prefer fewer components, then the lower screening threshold.
    """
    results = list(results)
    if not results:
        raise ValueError("no results to select from")
    return max(results, key=lambda r: (r.predictive_correlation,
                                       -r.spec.n_components,
                                       -r.spec.threshold))


def _correlation_with_flags(models):
    coef_list = [_term_coefs(m) for m in models]
    universe = _term_universe(coef_list)
    v = _full_vectors(coef_list, universe)
    vc = v - v.mean(axis=1, keepdims=True)
    gram = vc @ vc.T
    d = np.diag(gram).copy()
    t = v.shape[1]
    flat = d < CONSTANT_SD ** 2 * max(t - 1, 1)
    safe = np.where(flat, 1.0, d)
    corr = gram / np.sqrt(safe[:, None] * safe[None, :])
    corr[flat, :] = 0.0
    corr[:, flat] = 0.0
    np.clip(corr, -1.0, 1.0, out=corr)
    np.fill_diagonal(corr, 1.0)
    return corr, flat


def pairwise_model_correlation(models) -> np.ndarray:
    """Pearson correlations between full-length term coefficient vectors.

    Vectors are aligned on the union of term ids; terms a model never
    selected count as 0. A zero-variance vector correlates 0 with
    everything (flagged with a warning); the diagonal is exactly 1.
    """
    corr, flat = _correlation_with_flags(models)
    if flat.any():
        warnings.warn(
            f"zero-variance coefficient vectors at "
            f"{np.flatnonzero(flat).tolist()}, correlations recorded as 0",
            DegenerateStatWarning, stacklevel=2)
    return corr


def _normalized_rows(v: np.ndarray) -> np.ndarray:
    vc = v - v.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(vc, axis=1)
    ok = norms > 0
    out = np.zeros_like(vc)
    out[ok] = vc[ok] / norms[ok, None]
    return out


def select_alternate(results_by_scenario, delta: float = 0.05):
    """Pick one near-best model per scenario maximizing cross-scenario
    coefficient agreement.

    Candidates are the models within ``delta`` predictive-correlation units
    of their scenario's best. The chosen tuple maximizes the mean pairwise
    coefficient correlation: exhaustively when the combination count is at
    most 10^6, otherwise by coordinate ascent from the Best tuple to a
    fixed point (the objective never decreases).
    """
    scenarios = list(results_by_scenario)
    pools = []
    best_index = []
    for s in scenarios:
        results = list(results_by_scenario[s])
        if not results:
            raise ValueError(f"scenario {s} has no results")
        best = select_best(results)
        cutoff = best.predictive_correlation - delta
        pool = [r for r in results if r.predictive_correlation >= cutoff]
        pools.append(pool)
        best_index.append(pool.index(best))
    if len(scenarios) == 1:
        return {scenarios[0]: pools[0][best_index[0]]}

    coef_lists = [[_term_coefs(r) for r in pool] for pool in pools]
    universe = _term_universe([c for lst in coef_lists for c in lst])
    normed = [_normalized_rows(_full_vectors(lst, universe))
              for lst in coef_lists]
    n_s = len(scenarios)
    lut = {}
    for a in range(n_s):
        for b in range(a + 1, n_s):
            lut[a, b] = normed[a] @ normed[b].T

    sizes = [len(p) for p in pools]
    total = 1
    for n in sizes:
        total *= n
    if total <= EXHAUSTIVE_LIMIT:
        objective = np.zeros(sizes)
        for (a, b), m in lut.items():
            shape = [1] * n_s
            shape[a], shape[b] = sizes[a], sizes[b]
            objective += m.reshape(shape)
        choice = list(np.unravel_index(int(np.argmax(objective)), sizes))
    else:
        choice = list(best_index)
        for _ in range(100):
            changed = False
            for a in range(n_s):
                scores = np.zeros(sizes[a])
                for b in range(n_s):
                    if b == a:
                        continue
                    m = lut[a, b] if a < b else lut[b, a].T
                    scores += m[:, choice[b]]
                j = int(np.argmax(scores))
                if scores[j] > scores[choice[a]]:
                    choice[a] = j
                    changed = True
            if not changed:
                break
    return {s: pools[i][j] for s, i, j in
            zip(scenarios, range(n_s), choice)}


def top_fraction_terms(model, q: float):
    """The floor(q*T) terms with the largest absolute coefficients.

    Boundary ties break by term id order; terms with coefficient exactly 0
    are never included, so the set may be smaller than its capacity.
    """
    if not 0 < q <= 1:
        raise ValueError(f"q must be in (0, 1], got {q}")
    coefs = _term_coefs(model) if not isinstance(model, TermCoefficients) else model
    capacity = int(np.floor(q * len(coefs.term_ids)))
    order = sorted(range(len(coefs.term_ids)),
                   key=lambda i: (-abs(coefs.coefficients[i]), coefs.term_ids[i]))
    chosen = [i for i in order if abs(coefs.coefficients[i]) > 0.0][:capacity]
    return {coefs.term_ids[i] for i in chosen}


def common_terms(models, q: float):
    """Terms in the top fraction of every model, in stable term-id order."""
    models = list(models)
    if len(models) < 2:
        raise ValueError("need at least 2 models")
    tops = [top_fraction_terms(m, q) for m in models]
    shared = set.intersection(*tops)
    first = _term_coefs(models[0]) if not isinstance(models[0], TermCoefficients) \
        else models[0]
    return [t for t in first.term_ids if t in shared]


def build_report(results_by_scenario, q: float = 0.2, delta: float = 0.05) \
        -> ConsensusReport:
    """Select Best/Alt models for every scenario and measure their agreement."""
    scenarios = list(results_by_scenario)
    if not scenarios:
        raise ValueError("no scenarios")
    best = {s: select_best(results_by_scenario[s]) for s in scenarios}
    alt = select_alternate(results_by_scenario, delta)
    models = []
    for s in scenarios:
        models.append((s, "Best", best[s]))
        models.append((s, "Alt", alt[s]))
    labels = tuple(f"{s.label}/{role}" for s, role, _ in models)
    results = [r for _, _, r in models]
    corr, flat = _correlation_with_flags(results)
    flagged = tuple(labels[i] for i in np.flatnonzero(flat))
    pred = np.asarray([r.predictive_correlation for r in results])
    alt_models = [alt[s] for s in scenarios]
    alt_labels = tuple(f"{s.label}/Alt" for s in scenarios)
    tops = [top_fraction_terms(m, q) for m in alt_models]
    overlap = np.asarray([[len(a & b) for b in tops] for a in tops],
                         dtype=np.intp)
    common = tuple(common_terms(alt_models, q)) if len(alt_models) >= 2 \
        else tuple(sorted(tops[0]))
    return ConsensusReport(tuple(models), labels, corr, pred, alt_labels,
                           overlap, common, q, delta, flagged)


# ---------------------------------------------------------------------------
# Report files


def write_model_correlation_tsv(report: ConsensusReport, path) -> None:
    """Square coefficient-correlation matrix plus a predictive-correlation
    row, one column per chosen model."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("model\t" + "\t".join(report.model_labels) + "\n")
        for label, row in zip(report.model_labels, report.coef_correlation):
            fh.write(label + "\t" + "\t".join(f"{v:.6f}" for v in row) + "\n")
        fh.write("predictive_correlation\t" +
                 "\t".join(f"{v:.6f}" for v in report.predictive_correlations) +
                 "\n")


def write_top_overlap_tsv(report: ConsensusReport, path) -> None:
    """Counts of shared top-fraction terms between the Alternate models."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("model\t" + "\t".join(report.alt_labels) + "\n")
        for label, row in zip(report.alt_labels, report.top_overlap):
            fh.write(label + "\t" + "\t".join(str(int(v)) for v in row) + "\n")


def write_common_terms_tsv(report: ConsensusReport, path,
                           term_names=None) -> None:
    """The common-term list with human-readable names when available."""
    names = term_names or {}
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("term_id\tterm_name\n")
        for t in report.common_terms:
            fh.write(f"{t}\t{names.get(t, '')}\n")
