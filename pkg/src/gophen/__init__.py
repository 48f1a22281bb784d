"""Supervised principal component phenotype prediction with term-level
(gene-set) integration and consensus meta-analysis."""

__version__ = "0.1.0"

from .consensus import (
    ConsensusReport,
    Scenario,
    build_report,
    common_terms,
    pairwise_model_correlation,
    select_alternate,
    select_best,
    top_fraction_terms,
)
from .data import (
    Dataset,
    FoldAssignment,
    InputError,
    TermMapping,
    assemble_dataset,
    load_expression_tsv,
    load_labels_tsv,
    load_phenotypes_tsv,
    load_term_mapping_tsv,
    make_folds,
    save_expression_tsv,
    save_labels_tsv,
    save_phenotypes_tsv,
    save_term_mapping_tsv,
)
from .estimator import SupervisedPCARegressor
from .numerics import (
    PCABasis,
    RegressionFit,
    association_stat,
    fit_logistic_irls,
    fit_ols,
    pca_svd,
    pearson,
    standardize_columns,
)
from .pipeline import (
    CVResult,
    ModelSpec,
    build_grid,
    default_components,
    default_thresholds,
    fit_fold,
    grid_search,
    run_cv,
    screen_features,
    threshold_classify,
)
from .scoring import (
    DEFINITIONS,
    PhenotypeDefinition,
    SymptomRecord,
    compute_symptom_score,
    derive_phenotypes,
    load_symptoms_tsv,
    transform_severity,
)
from .synth import SynthConfig, SynthResult, generate_synthetic, noise_sd_for_r2
from .terms import (
    TermCoefficients,
    TermExpressionMatrix,
    aggregate_term_expression,
    project_gene_to_term_coefficients,
)
