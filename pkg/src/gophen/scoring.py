"""Continuous phenotype scores from symptom-inventory records.

Three instruments are supported: the 19-item CDC symptom inventory, the
8-item SF36 survey and the 5-item MFI fatigue inventory. CDC items carry a
severity code (0..3, mapped to equidistant scores 0/1/2.5/4) and a frequency
code (0..4); a subject's score is the sum over a symptom subset of
(transformed severity) x frequency. SF36 and MFI scores use direct
aggregation: the plain sum of the item values carried in the severity slot
(the frequency slot is conventionally 1 for reported items and ignored).

Four phenotype definitions are built in: TotScore (all 19 CDC symptoms),
CFSScore (the 9 CFS-defining symptoms), SF36 and MFI. SF36 item values are
aggregated as supplied; no 0-100 rescaling is applied.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .data import InputError

CDC = "CDC"
SF36 = "SF36"
MFI = "MFI"

ITEMS_PER_INSTRUMENT = {CDC: 19, SF36: 8, MFI: 5}

#: The 9 CFS-defining CDC symptoms.
CFS_DEFINING_SYMPTOMS = (
    "post_exertion_fatigue",
    "unrefreshing_sleep",
    "memory",
    "concentration",
    "muscle_pain",
    "joint_pain",
    "sore_throat",
    "tender_nodes",
    "headache",
)

#: CDC symptoms otherwise relevant to the syndrome.
OTHER_CDC_SYMPTOMS = (
    "diarrhea",
    "fever",
    "chills",
    "sleep_problems",
    "nausea",
    "abdominal_pain",
    "sinus_nasal",
    "shortness_of_breath",
    "photophobia",
    "depression",
)

CDC_SYMPTOMS = CFS_DEFINING_SYMPTOMS + OTHER_CDC_SYMPTOMS

SF36_ITEMS = (
    "limit_physical",
    "limit_social",
    "limit_role_physical",
    "bodily_pain",
    "mental_health",
    "limit_role_emotional",
    "vitality",
    "general_health",
)

MFI_ITEMS = (
    "general_fatigue",
    "physical_fatigue",
    "mental_fatigue",
    "reduced_motivation",
    "reduced_activity",
)

_CATALOG = {CDC: CDC_SYMPTOMS, SF36: SF36_ITEMS, MFI: MFI_ITEMS}

_SEVERITY_SCORE = {0: 0.0, 1: 1.0, 2: 2.5, 3: 4.0}


class SymptomItem(NamedTuple):
    symptom_id: str
    severity: int
    frequency: int


@dataclass(frozen=True)
class SymptomRecord:
    """One subject's answers for one instrument.

    Item codes are validated at construction (severity 0..3, frequency 0..4,
    severity 0 iff frequency 0, unique symptom ids). Completeness (all M
    items of the instrument present) is only required when deriving the
    standard phenotypes, so partial records can still be scored against a
    matching symptom subset.
    """

    subject_id: str
    instrument: str
    items: tuple

    def __post_init__(self):
        if self.instrument not in ITEMS_PER_INSTRUMENT:
            raise InputError(
                f"unknown instrument {self.instrument!r} for subject "
                f"{self.subject_id!r}"
            )
        items = tuple(SymptomItem(*it) for it in self.items)
        seen = set()
        for it in items:
            if it.symptom_id in seen:
                raise InputError(
                    f"duplicate symptom {it.symptom_id!r} for subject "
                    f"{self.subject_id!r}"
                )
            seen.add(it.symptom_id)
            if it.severity not in (0, 1, 2, 3):
                raise InputError(
                    f"severity code {it.severity!r} out of range 0..3 "
                    f"(subject {self.subject_id!r}, symptom {it.symptom_id!r})"
                )
            if it.frequency not in (0, 1, 2, 3, 4):
                raise InputError(
                    f"frequency code {it.frequency!r} out of range 0..4 "
                    f"(subject {self.subject_id!r}, symptom {it.symptom_id!r})"
                )
            if (it.severity == 0) != (it.frequency == 0):
                raise InputError(
                    f"severity and frequency must both be 0 for an "
                    f"unreported symptom (subject {self.subject_id!r}, "
                    f"symptom {it.symptom_id!r})"
                )
        object.__setattr__(self, "items", items)

    def require_complete(self) -> None:
        """Check that all M items of the instrument are present."""
        expected = ITEMS_PER_INSTRUMENT[self.instrument]
        if len(self.items) != expected:
            raise InputError(
                f"subject {self.subject_id!r}: {self.instrument} record has "
                f"{len(self.items)} items, expected {expected}"
            )


@dataclass(frozen=True)
class PhenotypeDefinition:
    """A named phenotype: an instrument plus the symptom subset it sums."""

    name: str
    instrument: str
    symptom_subset: tuple


DEFINITIONS = {
    "TotScore": PhenotypeDefinition("TotScore", CDC, CDC_SYMPTOMS),
    "CFSScore": PhenotypeDefinition("CFSScore", CDC, CFS_DEFINING_SYMPTOMS),
    "SF36": PhenotypeDefinition("SF36", SF36, SF36_ITEMS),
    "MFI": PhenotypeDefinition("MFI", MFI, MFI_ITEMS),
}

PHENOTYPE_NAMES = tuple(DEFINITIONS)


def transform_severity(code: int) -> float:
    """Map a 0..3 severity code to its equidistant score 0/1/2.5/4."""
    try:
        return _SEVERITY_SCORE[code]
    except (KeyError, TypeError):
        raise InputError(f"severity code {code!r} out of range 0..3") from None


def compute_symptom_score(record: SymptomRecord,
                          definition: PhenotypeDefinition) -> float:
    """Score one record against a phenotype definition.

    CDC items contribute transform_severity(severity) x frequency; SF36/MFI
    items contribute their value directly. The record must cover every
    symptom in the definition's subset. Item order never matters.
    """
    if record.instrument != definition.instrument:
        raise InputError(
            f"definition {definition.name!r} needs instrument "
            f"{definition.instrument}, record has {record.instrument}"
        )
    by_id = {it.symptom_id: it for it in record.items}
    total = 0.0
    for sid in definition.symptom_subset:
        it = by_id.get(sid)
        if it is None:
            raise InputError(
                f"subject {record.subject_id!r}: record is missing symptom "
                f"{sid!r} required by {definition.name!r}"
            )
        if definition.instrument == CDC:
            total += transform_severity(it.severity) * it.frequency
        else:
            total += float(it.severity)
    return total


def derive_phenotypes(records, definitions=None):
    """Compute the standard phenotype vectors from a list of records.

    Subjects are ordered by first appearance. Every subject must have a
    complete record for each instrument required by the requested
    definitions.

    Returns (subject_ids, {definition name: ndarray of scores}).
    """
    if definitions is None:
        definitions = list(DEFINITIONS.values())
    by_subject: dict = {}
    for rec in records:
        slot = by_subject.setdefault(rec.subject_id, {})
        if rec.instrument in slot:
            raise InputError(
                f"subject {rec.subject_id!r} has more than one "
                f"{rec.instrument} record"
            )
        slot[rec.instrument] = rec
    subject_ids = tuple(by_subject)
    scores = {}
    for definition in definitions:
        vec = np.empty(len(subject_ids), dtype=np.float64)
        for i, sid in enumerate(subject_ids):
            rec = by_subject[sid].get(definition.instrument)
            if rec is None:
                raise InputError(
                    f"subject {sid!r} is missing a {definition.instrument} "
                    f"record required by {definition.name!r}"
                )
            rec.require_complete()
            vec[i] = compute_symptom_score(rec, definition)
        scores[definition.name] = vec
    return subject_ids, scores


_SYMPTOM_HEADER = ("subject_id", "instrument", "symptom_id",
                   "severity_code", "frequency_code")


def load_symptoms_tsv(path):
    """Load symptom records from a five-column TSV (see _SYMPTOM_HEADER).

    Rows are grouped into one record per (subject, instrument), preserving
    subject first-appearance order. Errors carry the offending line number.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise InputError(f"{path}: empty symptom file")
    header = tuple(lines[0].split("\t"))
    if header != _SYMPTOM_HEADER:
        raise InputError(
            f"{path}:1: expected header {'/'.join(_SYMPTOM_HEADER)}, "
            f"got {lines[0]!r}"
        )
    grouped: dict = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        cells = line.split("\t")
        if len(cells) != 5:
            raise InputError(f"{path}:{lineno}: expected 5 columns, got {len(cells)}")
        sid, instrument, symptom, sev, freq = cells
        try:
            sev_i, freq_i = int(sev), int(freq)
        except ValueError:
            raise InputError(
                f"{path}:{lineno}: severity/frequency must be integers, "
                f"got {sev!r}/{freq!r}"
            ) from None
        grouped.setdefault((sid, instrument), []).append(
            (symptom, sev_i, freq_i, lineno))
    records = []
    for (sid, instrument), items in grouped.items():
        try:
            records.append(SymptomRecord(
                sid, instrument, tuple((s, v, f) for s, v, f, _ in items)))
        except InputError as exc:
            raise InputError(f"{path} (near line {items[0][3]}): {exc}") from None
    return records
