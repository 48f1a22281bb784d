"""Core data containers and TSV input/output.

Everything downstream works on three immutable objects: a ``Dataset``
(subjects x features expression matrix plus aligned phenotype vectors and
optional binary labels), a ``TermMapping`` from annotation terms to member
features, and a ``FoldAssignment`` for cross-validation.

All files are UTF-8, tab-delimited, decimal point, no thousands separators.
Expression values are written with ``repr`` so a save/load round trip is
bit-exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class InputError(ValueError):
    """Raised for malformed or inconsistent input data (CLI exit code 2)."""


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


def _check_unique(ids, what: str) -> None:
    seen = set()
    for x in ids:
        if x in seen:
            raise InputError(f"duplicate {what} identifier: {x!r}")
        seen.add(x)


@dataclass(frozen=True)
class Dataset:
    """Subjects x features expression matrix with aligned outcome vectors.

    Attributes
    ----------
    subject_ids : tuple of str
        Row identifiers, length N (N >= 2).
    feature_ids : tuple of str
        Column identifiers, length p (p >= 1).
    expression : ndarray, shape (N, p)
        Finite expression values; stored read-only.
    phenotypes : dict
        Phenotype-definition name -> read-only float vector of length N.
    binary_labels : ndarray of str, optional
        Per-subject "CFS"/"NF" labels, length N.
    """

    subject_ids: tuple
    feature_ids: tuple
    expression: np.ndarray
    phenotypes: dict = field(default_factory=dict)
    binary_labels: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "subject_ids", tuple(self.subject_ids))
        object.__setattr__(self, "feature_ids", tuple(self.feature_ids))
        n, p = len(self.subject_ids), len(self.feature_ids)
        if n < 2:
            raise InputError(f"need at least 2 subjects, got {n}")
        if p < 1:
            raise InputError(f"need at least 1 feature, got {p}")
        _check_unique(self.subject_ids, "subject")
        _check_unique(self.feature_ids, "feature")
        expr = np.asarray(self.expression, dtype=np.float64)
        if expr.shape != (n, p):
            raise InputError(
                f"expression shape {expr.shape} does not match "
                f"{n} subjects x {p} features"
            )
        if not np.all(np.isfinite(expr)):
            i, j = np.argwhere(~np.isfinite(expr))[0]
            raise InputError(
                f"non-finite expression value for subject "
                f"{self.subject_ids[i]!r}, feature {self.feature_ids[j]!r}"
            )
        object.__setattr__(self, "expression", _readonly(expr))
        phenos = {}
        for name, vec in dict(self.phenotypes).items():
            v = np.asarray(vec, dtype=np.float64)
            if v.shape != (n,):
                raise InputError(
                    f"phenotype {name!r} has length {v.shape}, expected ({n},)"
                )
            if not np.all(np.isfinite(v)):
                raise InputError(f"phenotype {name!r} contains non-finite values")
            phenos[name] = _readonly(v)
        object.__setattr__(self, "phenotypes", phenos)
        if self.binary_labels is not None:
            lab = np.asarray(self.binary_labels, dtype=str)
            if lab.shape != (n,):
                raise InputError(
                    f"labels have length {lab.shape}, expected ({n},)"
                )
            bad = set(lab.tolist()) - {"CFS", "NF"}
            if bad:
                raise InputError(f"labels must be 'CFS' or 'NF', got {sorted(bad)}")
            object.__setattr__(self, "binary_labels", _readonly(lab))

    @property
    def n_subjects(self) -> int:
        return len(self.subject_ids)

    @property
    def n_features(self) -> int:
        return len(self.feature_ids)

    def with_phenotypes(self, phenotypes: dict) -> "Dataset":
        """Return a copy with additional/overriding phenotype vectors."""
        merged = dict(self.phenotypes)
        merged.update(phenotypes)
        return Dataset(self.subject_ids, self.feature_ids, self.expression,
                       merged, self.binary_labels)

    def with_labels(self, labels) -> "Dataset":
        """Return a copy with binary labels attached."""
        return Dataset(self.subject_ids, self.feature_ids, self.expression,
                       self.phenotypes, labels)


@dataclass(frozen=True)
class MappingResolution:
    """Result of validating a TermMapping against a Dataset.

    Features named in the mapping but absent from the dataset are reported
    here, never silently dropped. ``member_columns[i]`` holds the dataset
    column indices of the surviving members of ``term_ids[i]``.
    """

    term_ids: tuple
    member_columns: tuple
    missing_features: dict
    dropped_terms: tuple


@dataclass(frozen=True)
class TermMapping:
    """Annotation terms mapped to their member feature identifiers.

    ``terms`` maps a term id (e.g. a GO code) to a non-empty tuple of member
    feature ids, deduplicated, in first-seen order. Term iteration order is
    the insertion order, which keeps downstream runs deterministic.
    """

    terms: dict
    term_names: dict | None = None

    def __post_init__(self):
        cleaned = {}
        for term, members in dict(self.terms).items():
            uniq = tuple(dict.fromkeys(members))
            if not uniq:
                raise InputError(f"term {term!r} has no member features")
            cleaned[term] = uniq
        if not cleaned:
            raise InputError("term mapping is empty")
        object.__setattr__(self, "terms", cleaned)

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    def validate_against(self, dataset: Dataset) -> MappingResolution:
        """Resolve member feature ids to dataset column indices.

        Returns a report of missing features and of terms left with no
        member at all; surviving terms keep the mapping's insertion order.
        """
        col = {f: i for i, f in enumerate(dataset.feature_ids)}
        term_ids, member_columns, dropped = [], [], []
        missing = {}
        for term, members in self.terms.items():
            present = [col[m] for m in members if m in col]
            absent = tuple(m for m in members if m not in col)
            if absent:
                missing[term] = absent
            if present:
                term_ids.append(term)
                member_columns.append(np.asarray(present, dtype=np.intp))
            else:
                dropped.append(term)
        return MappingResolution(tuple(term_ids), tuple(member_columns),
                                 missing, tuple(dropped))


@dataclass(frozen=True)
class FoldAssignment:
    """Deterministic k-fold partition of subjects.

    ``assignment[i]`` is the fold (1..k) holding subject i out as test data.
    """

    k: int
    assignment: np.ndarray
    seed: int

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=np.intp)
        if self.k < 2:
            raise InputError(f"fold count must be >= 2, got {self.k}")
        sizes = np.bincount(a, minlength=self.k + 1)[1:]
        if np.any(sizes == 0):
            raise InputError("every fold must be non-empty")
        if sizes.max() - sizes.min() > 1:
            raise InputError("fold sizes must differ by at most 1")
        object.__setattr__(self, "assignment", _readonly(a))

    @property
    def n_subjects(self) -> int:
        return len(self.assignment)

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != fold)

    def folds(self):
        """Yield (fold, train_indices, test_indices) for fold = 1..k."""
        for f in range(1, self.k + 1):
            yield f, self.train_indices(f), self.test_indices(f)


def make_folds(n_subjects: int, k: int, seed: int) -> FoldAssignment:
    """Assign subjects to k balanced folds, deterministically in the seed.

    Subject indices are shuffled with a seeded generator and dealt
    round-robin, so fold sizes differ by at most one.
    """
    if k < 2:
        raise InputError(f"fold count must be >= 2, got {k}")
    if k > n_subjects:
        raise InputError(
            f"fold count {k} exceeds subject count {n_subjects}"
        )
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n_subjects)
    assignment = np.empty(n_subjects, dtype=np.intp)
    assignment[perm] = np.arange(n_subjects) % k + 1
    return FoldAssignment(k=k, assignment=assignment, seed=seed)


# ---------------------------------------------------------------------------
# TSV input/output


def _fmt(x: float) -> str:
    # repr gives the shortest string that round-trips to the same double
    return repr(float(x))


def _parse_value(text: str, row_id: str, col_id: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise InputError(
            f"cannot parse value {text!r} at row {row_id!r}, column {col_id!r}"
        ) from None
    if not math.isfinite(v):
        raise InputError(
            f"non-finite value {text!r} at row {row_id!r}, column {col_id!r}"
        )
    return v


def _read_lines(path) -> list:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return fh.read().splitlines()


def load_expression_tsv(path) -> Dataset:
    """Load an expression matrix: header row = feature ids, first column =
    subject ids. Rejects duplicates and non-finite cells, naming the cell."""
    lines = _read_lines(path)
    if not lines:
        raise InputError(f"{path}: empty expression file")
    header = lines[0].split("\t")
    feature_ids = tuple(header[1:])
    if not feature_ids:
        raise InputError(f"{path}: header row has no feature identifiers")
    subject_ids, rows = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        cells = line.split("\t")
        if len(cells) != len(feature_ids) + 1:
            raise InputError(
                f"{path}:{lineno}: expected {len(feature_ids) + 1} columns, "
                f"got {len(cells)}"
            )
        sid = cells[0]
        rows.append([_parse_value(c, sid, feature_ids[j])
                     for j, c in enumerate(cells[1:])])
        subject_ids.append(sid)
    return Dataset(tuple(subject_ids), feature_ids,
                   np.asarray(rows, dtype=np.float64))


def save_expression_tsv(dataset: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("subject_id\t" + "\t".join(dataset.feature_ids) + "\n")
        for i, sid in enumerate(dataset.subject_ids):
            row = dataset.expression[i]
            fh.write(sid + "\t" + "\t".join(_fmt(v) for v in row) + "\n")


def load_term_mapping_tsv(path) -> TermMapping:
    """Load a headerless two-column (term id, feature id) pair file.

    Pairs are grouped by term in insertion order; duplicated pairs collapse
    (set semantics).
    """
    lines = _read_lines(path)
    terms: dict = {}
    for lineno, line in enumerate(lines, start=1):
        if not line:
            continue
        cells = line.split("\t")
        if len(cells) != 2:
            raise InputError(
                f"{path}:{lineno}: expected 2 columns (term, feature), "
                f"got {len(cells)}"
            )
        term, feat = cells
        terms.setdefault(term, [])
        if feat not in terms[term]:
            terms[term].append(feat)
    if not terms:
        raise InputError(f"{path}: empty term mapping file")
    return TermMapping({t: tuple(m) for t, m in terms.items()})


def save_term_mapping_tsv(mapping: TermMapping, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for term, members in mapping.terms.items():
            for m in members:
                fh.write(f"{term}\t{m}\n")


def load_phenotypes_tsv(path):
    """Load a phenotype table: header = subject_id + phenotype names.

    Returns (subject_ids, {name: vector}).
    """
    lines = _read_lines(path)
    if not lines:
        raise InputError(f"{path}: empty phenotype file")
    header = lines[0].split("\t")
    names = header[1:]
    if not names:
        raise InputError(f"{path}: phenotype file has no value columns")
    subject_ids, rows = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        cells = line.split("\t")
        if len(cells) != len(names) + 1:
            raise InputError(
                f"{path}:{lineno}: expected {len(names) + 1} columns, "
                f"got {len(cells)}"
            )
        subject_ids.append(cells[0])
        rows.append([_parse_value(c, cells[0], names[j])
                     for j, c in enumerate(cells[1:])])
    _check_unique(subject_ids, "subject")
    values = np.asarray(rows, dtype=np.float64)
    return tuple(subject_ids), {n: values[:, j] for j, n in enumerate(names)}


def save_phenotypes_tsv(subject_ids, phenotypes: dict, path) -> None:
    names = list(phenotypes)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("subject_id\t" + "\t".join(names) + "\n")
        for i, sid in enumerate(subject_ids):
            fh.write(sid + "\t" +
                     "\t".join(_fmt(phenotypes[n][i]) for n in names) + "\n")


def load_labels_tsv(path):
    """Load a two-column (subject_id, label) file with a header row.

    Returns (subject_ids, labels array of 'CFS'/'NF').
    """
    lines = _read_lines(path)
    if not lines:
        raise InputError(f"{path}: empty labels file")
    subject_ids, labels = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        cells = line.split("\t")
        if len(cells) != 2:
            raise InputError(f"{path}:{lineno}: expected 2 columns, got {len(cells)}")
        if cells[1] not in ("CFS", "NF"):
            raise InputError(
                f"{path}:{lineno}: label must be 'CFS' or 'NF', got {cells[1]!r}"
            )
        subject_ids.append(cells[0])
        labels.append(cells[1])
    _check_unique(subject_ids, "subject")
    return tuple(subject_ids), np.asarray(labels, dtype=str)


def save_labels_tsv(subject_ids, labels, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("subject_id\tlabel\n")
        for sid, lab in zip(subject_ids, labels):
            fh.write(f"{sid}\t{lab}\n")


def _align(subject_ids, other_ids, what: str) -> np.ndarray:
    pos = {s: i for i, s in enumerate(other_ids)}
    missing = [s for s in subject_ids if s not in pos]
    if missing:
        raise InputError(f"{what} file is missing subjects: {missing[:5]}")
    extra = set(other_ids) - set(subject_ids)
    if extra:
        raise InputError(
            f"{what} file has subjects absent from the expression matrix: "
            f"{sorted(extra)[:5]}"
        )
    return np.asarray([pos[s] for s in subject_ids], dtype=np.intp)


def assemble_dataset(expression_path, phenotypes_path=None,
                     labels_path=None) -> Dataset:
    """Load expression plus optional phenotype/label files, aligned by
    subject id to the expression row order."""
    dataset = load_expression_tsv(expression_path)
    if phenotypes_path is not None:
        sids, phenos = load_phenotypes_tsv(phenotypes_path)
        order = _align(dataset.subject_ids, sids, "phenotype")
        dataset = dataset.with_phenotypes(
            {n: v[order] for n, v in phenos.items()})
    if labels_path is not None:
        sids, labels = load_labels_tsv(labels_path)
        order = _align(dataset.subject_ids, sids, "labels")
        dataset = dataset.with_labels(labels[order])
    return dataset
