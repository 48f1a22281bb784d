import numpy as np
import pytest

from gophen.data import Dataset, TermMapping


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)


def small_dataset(rng, n=24, p=12, phenotype=None, labels=None):
    """Random dataset with simple ids; phenotype defaults to noise."""
    expr = rng.standard_normal((n, p))
    subjects = tuple(f"S{i}" for i in range(n))
    features = tuple(f"g{j}" for j in range(p))
    if phenotype is None:
        phenotype = rng.standard_normal(n)
    return Dataset(subjects, features, expr, {"y": phenotype}, labels)


def block_mapping(features, members_per_term):
    """Disjoint consecutive blocks of features, one term each."""
    terms = {}
    for t, start in enumerate(range(0, len(features), members_per_term)):
        block = features[start:start + members_per_term]
        if len(block) == members_per_term:
            terms[f"T{t}"] = tuple(block)
    return TermMapping(terms)


def identity_mapping(features):
    """One singleton term per feature, in feature order."""
    return TermMapping({f"I_{f}": (f,) for f in features})
