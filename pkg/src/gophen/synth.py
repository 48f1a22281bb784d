"""Synthetic expression datasets with planted term-level signal.

Each term owns a disjoint block of member features built around a shared
latent factor: feature = loading * latent + sqrt(1 - loading^2) * noise,
so members correlate within a term and the term-level mean concentrates the
latent. A chosen subset of terms is "planted": the continuous phenotype is
the weighted sum of their latents plus Gaussian noise. Binary labels come
from thresholding a noisy copy of the phenotype at its median, with
``binary_overlap`` controlling how much the class score distributions
overlap (0 = perfectly separable by the true phenotype).

Everything is a deterministic function of the seed, which makes these
bundles usable as ground-truth oracles for recovery benchmarks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, InputError, TermMapping


@dataclass(frozen=True)
class SynthConfig:
    n_subjects: int = 80
    n_features: int = 1000
    n_terms: int = 200
    members_per_term: int = 5
    n_planted_terms: int = 10
    effect_weights: tuple | None = None
    noise_sd: float = 1.0
    binary_overlap: float = 0.25
    latent_loading: float = 0.7
    n_phenotypes: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_subjects < 2:
            raise InputError("need at least 2 subjects")
        if self.n_planted_terms > self.n_terms:
            raise InputError(
                f"{self.n_planted_terms} planted terms exceed {self.n_terms} terms")
        if self.members_per_term * self.n_terms > self.n_features:
            raise InputError(
                f"{self.n_terms} terms x {self.members_per_term} members "
                f"do not fit in {self.n_features} features")
        if self.members_per_term < 1:
            raise InputError("members_per_term must be >= 1")
        if not 0.0 <= self.binary_overlap <= 1.0:
            raise InputError("binary_overlap must be in [0, 1]")
        if not 0.0 < self.latent_loading <= 1.0:
            raise InputError("latent_loading must be in (0, 1]")
        if self.noise_sd < 0:
            raise InputError("noise_sd must be non-negative")
        if self.n_phenotypes < 1:
            raise InputError("n_phenotypes must be >= 1")
        weights = self.effect_weights
        if weights is None:
            weights = (1.0,) * self.n_planted_terms
        weights = tuple(float(w) for w in weights)
        if len(weights) != self.n_planted_terms:
            raise InputError(
                f"{len(weights)} effect weights for "
                f"{self.n_planted_terms} planted terms")
        object.__setattr__(self, "effect_weights", weights)


@dataclass(frozen=True)
class SynthResult:
    dataset: Dataset
    mapping: TermMapping
    planted_term_ids: tuple
    term_latents: np.ndarray = field(repr=False)


def noise_sd_for_r2(effect_weights, r2: float) -> float:
    """Noise level making the planted signal explain a target R^2.

    The latents are independent unit-variance factors, so the signal
    variance is the sum of squared weights.
    """
    if not 0 < r2 < 1:
        raise ValueError("r2 must be in (0, 1)")
    signal_var = float(np.sum(np.square(effect_weights)))
    return float(np.sqrt(signal_var * (1.0 - r2) / r2))


def _ids(prefix: str, count: int):
    width = max(3, len(str(count)))
    return tuple(f"{prefix}{i + 1:0{width}d}" for i in range(count))


def generate_synthetic(config: SynthConfig) -> SynthResult:
    """Build a (Dataset, TermMapping, planted term ids) bundle per config."""
    rng = np.random.default_rng(config.seed)
    n, p, t = config.n_subjects, config.n_features, config.n_terms
    m = config.members_per_term
    subject_ids = _ids("S", n)
    feature_ids = _ids("g", p)
    term_ids = _ids("T", t)

    latents = rng.standard_normal((n, t))
    idio = rng.standard_normal((n, p))
    lam = config.latent_loading
    expression = idio.copy()
    terms = {}
    for j in range(t):
        cols = range(j * m, (j + 1) * m)
        terms[term_ids[j]] = tuple(feature_ids[c] for c in cols)
        for c in cols:
            expression[:, c] = (lam * latents[:, j]
                                + np.sqrt(1.0 - lam * lam) * idio[:, c])

    planted = np.sort(rng.choice(t, size=config.n_planted_terms,
                                 replace=False))
    signal = latents[:, planted] @ np.asarray(config.effect_weights)

    phenotypes = {}
    for r in range(config.n_phenotypes):
        noise = rng.standard_normal(n) * config.noise_sd
        phenotypes[f"pheno_{r + 1}"] = signal + noise

    first = phenotypes["pheno_1"]
    spread = float(np.std(first, ddof=1))
    ratio = config.binary_overlap / max(1.0 - config.binary_overlap, 1e-9)
    label_noise = rng.standard_normal(n) * ratio * spread
    noisy = first + label_noise
    labels = np.where(noisy > np.median(noisy), "CFS", "NF")

    dataset = Dataset(subject_ids, feature_ids, expression, phenotypes,
                      labels)
    mapping = TermMapping(terms)
    return SynthResult(dataset, mapping,
                       tuple(term_ids[j] for j in planted),
                       latents)


def config_from_mapping(values: dict) -> SynthConfig:
    """Build a SynthConfig from string key/value pairs (config file)."""
    kwargs = {}
    int_keys = ("n_subjects", "n_features", "n_terms", "members_per_term",
                "n_planted_terms", "n_phenotypes", "seed")
    float_keys = ("noise_sd", "binary_overlap", "latent_loading")
    for key, raw in values.items():
        if key in int_keys:
            kwargs[key] = int(raw)
        elif key in float_keys:
            kwargs[key] = float(raw)
        elif key == "effect_weights":
            kwargs[key] = tuple(float(v) for v in raw.split(",") if v.strip())
        else:
            raise InputError(f"unknown synthetic config key {key!r}")
    return SynthConfig(**kwargs)
