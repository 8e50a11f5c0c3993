"""Clinical vignette corpus: loading, validation, and stratification.

A corpus is a JSONL file, one vignette per line.  See docs/vignette-format.md
for the record schema.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping

SPECIALTIES: tuple[str, ...] = (
    "Cardiovascular",
    "Dermatology",
    "Endocrine",
    "ENT",
    "Gastroenterology",
    "Hematology",
    "Infectious diseases",
    "Nephrology",
    "Neurology",
    "Obstetrics and Gynecology",
    "Ophthalmology",
    "Orthopedics and Rheumatology",
    "Respiratory",
    "Urology",
)

INCIDENCE_CLASSES: tuple[str, ...] = ("common", "less_common")
DISEASE_COURSES: tuple[str, ...] = ("acute", "chronic")
PRESENTATION_CLASSES: tuple[str, ...] = ("typical", "atypical", "uncommon")
SEXES: tuple[str, ...] = ("male", "female")

MAX_AGE = 120


class CorpusError(ValueError):
    """Base class for corpus loading and validation failures."""


class EmptyCorpus(CorpusError):
    pass


class DuplicateId(CorpusError):
    def __init__(self, vignette_id: str, line_no: int):
        super().__init__(f"duplicate vignette id {vignette_id!r} at line {line_no}")
        self.vignette_id = vignette_id
        self.line_no = line_no


class MalformedRecord(CorpusError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


@dataclass(frozen=True)
class ClinicalVignette:
    """One benchmark case: patient facts plus the gold answer key."""

    id: str
    specialty: str
    age: int
    sex: str
    narrative: str
    gold_diagnosis: str
    gold_specialty: str
    incidence_class: str
    disease_course: str
    presentation_class: str
    gold_synonyms: tuple[str, ...] = ()
    demographics: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Violation:
    code: str
    field: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    vignette_id: str
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_vignette(v: ClinicalVignette) -> ValidationReport:
    """Check one vignette against the closed vocabularies and field rules."""
    problems: list[Violation] = []

    def bad(code: str, fld: str, message: str) -> None:
        problems.append(Violation(code, fld, message))

    if not v.id or not v.id.strip():
        bad("EmptyId", "id", "vignette id must be non-empty")
    if v.specialty not in SPECIALTIES:
        bad("UnknownSpecialty", "specialty", f"unknown specialty {v.specialty!r}")
    if v.gold_specialty not in SPECIALTIES:
        bad("UnknownSpecialty", "gold_specialty", f"unknown specialty {v.gold_specialty!r}")
    if not isinstance(v.age, int) or isinstance(v.age, bool) or not (0 <= v.age <= MAX_AGE):
        bad("InvalidAge", "age", f"age must be an integer in [0, {MAX_AGE}], got {v.age!r}")
    if v.sex not in SEXES:
        bad("UnknownSex", "sex", f"sex must be one of {SEXES}, got {v.sex!r}")
    if not v.narrative or not v.narrative.strip():
        bad("EmptyNarrative", "narrative", "narrative must be non-empty")
    if not v.gold_diagnosis or not v.gold_diagnosis.strip():
        bad("EmptyDiagnosis", "gold_diagnosis", "gold diagnosis must be non-empty")
    if v.incidence_class not in INCIDENCE_CLASSES:
        bad("UnknownIncidenceClass", "incidence_class",
            f"incidence_class must be one of {INCIDENCE_CLASSES}, got {v.incidence_class!r}")
    if v.disease_course not in DISEASE_COURSES:
        bad("UnknownDiseaseCourse", "disease_course",
            f"disease_course must be one of {DISEASE_COURSES}, got {v.disease_course!r}")
    if v.presentation_class not in PRESENTATION_CLASSES:
        bad("UnknownPresentationClass", "presentation_class",
            f"presentation_class must be one of {PRESENTATION_CLASSES}, got {v.presentation_class!r}")
    for syn in v.gold_synonyms:
        if not syn or not syn.strip():
            bad("EmptySynonym", "gold_synonyms", "gold synonyms must be non-empty strings")
    return ValidationReport(vignette_id=v.id, violations=tuple(problems))


@dataclass(frozen=True)
class CorpusFilter:
    """Conjunction of optional criteria; a None field matches everything."""

    specialty: str | None = None
    incidence_class: str | None = None
    disease_course: str | None = None
    presentation_class: str | None = None
    sex: str | None = None
    min_age: int | None = None
    max_age: int | None = None

    def matches(self, v: ClinicalVignette) -> bool:
        if self.specialty is not None and v.specialty != self.specialty:
            return False
        if self.incidence_class is not None and v.incidence_class != self.incidence_class:
            return False
        if self.disease_course is not None and v.disease_course != self.disease_course:
            return False
        if self.presentation_class is not None and v.presentation_class != self.presentation_class:
            return False
        if self.sex is not None and v.sex != self.sex:
            return False
        if self.min_age is not None and v.age < self.min_age:
            return False
        if self.max_age is not None and v.age > self.max_age:
            return False
        return True

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


EMPTY_FILTER = CorpusFilter()


@dataclass(frozen=True)
class Corpus:
    """An ordered, validated collection of vignettes with a content hash."""

    vignettes: tuple[ClinicalVignette, ...]
    content_hash: str
    source: str = ""

    def __len__(self) -> int:
        return len(self.vignettes)

    def __iter__(self) -> Iterator[ClinicalVignette]:
        return iter(self.vignettes)

    def get(self, vignette_id: str) -> ClinicalVignette:
        for v in self.vignettes:
            if v.id == vignette_id:
                return v
        raise KeyError(vignette_id)

    def specialty_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for v in self.vignettes:
            counts[v.specialty] = counts.get(v.specialty, 0) + 1
        return counts


def vignette_to_record(v: ClinicalVignette) -> dict:
    record = {
        "id": v.id,
        "specialty": v.specialty,
        "age": v.age,
        "sex": v.sex,
        "narrative": v.narrative,
        "gold_diagnosis": v.gold_diagnosis,
        "gold_specialty": v.gold_specialty,
        "incidence_class": v.incidence_class,
        "disease_course": v.disease_course,
        "presentation_class": v.presentation_class,
    }
    if v.gold_synonyms:
        record["gold_synonyms"] = list(v.gold_synonyms)
    if v.demographics:
        record["demographics"] = dict(v.demographics)
    return record


_REQUIRED_FIELDS = (
    "id", "specialty", "age", "sex", "narrative", "gold_diagnosis",
    "gold_specialty", "incidence_class", "disease_course", "presentation_class",
)


def vignette_from_record(record: dict, line_no: int = 0) -> ClinicalVignette:
    if not isinstance(record, dict):
        raise MalformedRecord(line_no, f"expected an object, got {type(record).__name__}")
    missing = [f for f in _REQUIRED_FIELDS if f not in record]
    if missing:
        raise MalformedRecord(line_no, f"missing fields: {', '.join(missing)}")
    synonyms = record.get("gold_synonyms", [])
    if not isinstance(synonyms, list) or not all(isinstance(s, str) for s in synonyms):
        raise MalformedRecord(line_no, "gold_synonyms must be a list of strings")
    demographics = record.get("demographics", {})
    if not isinstance(demographics, dict):
        raise MalformedRecord(line_no, "demographics must be an object")
    try:
        return ClinicalVignette(
            id=record["id"],
            specialty=record["specialty"],
            age=record["age"],
            sex=record["sex"],
            narrative=record["narrative"],
            gold_diagnosis=record["gold_diagnosis"],
            gold_specialty=record["gold_specialty"],
            incidence_class=record["incidence_class"],
            disease_course=record["disease_course"],
            presentation_class=record["presentation_class"],
            gold_synonyms=tuple(synonyms),
            demographics={str(k): str(val) for k, val in demographics.items()},
        )
    except TypeError as exc:
        raise MalformedRecord(line_no, f"bad field types: {exc}") from exc


def canonical_hash(vignettes: tuple[ClinicalVignette, ...]) -> str:
    """Hash a canonical serialization, stable across formatting differences."""
    payload = "\n".join(
        json.dumps(vignette_to_record(v), sort_keys=True, ensure_ascii=False)
        for v in vignettes
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def load_corpus(path: str | Path) -> Corpus:
    """Load and validate a JSONL corpus file.

    Raises EmptyCorpus, DuplicateId, or MalformedRecord on bad input;
    unreadable paths raise the underlying OSError.
    """
    path = Path(path)
    raw = path.read_bytes()
    vignettes: list[ClinicalVignette] = []
    seen: dict[str, int] = {}
    for line_no, line in enumerate(raw.decode("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(line_no, f"invalid JSON: {exc.msg}") from exc
        v = vignette_from_record(record, line_no)
        report = validate_vignette(v)
        if not report.ok:
            first = report.violations[0]
            raise MalformedRecord(line_no, f"{first.code} on {first.field}: {first.message}")
        if v.id in seen:
            raise DuplicateId(v.id, line_no)
        seen[v.id] = line_no
        vignettes.append(v)
    if not vignettes:
        raise EmptyCorpus(f"no vignettes in {path}")
    content_hash = hashlib.sha256(raw).hexdigest()
    return Corpus(vignettes=tuple(vignettes), content_hash=content_hash, source=str(path))


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    path = Path(path)
    lines = [
        json.dumps(vignette_to_record(v), sort_keys=True, ensure_ascii=False)
        for v in corpus.vignettes
    ]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def stratify(corpus: Corpus, flt: CorpusFilter) -> Corpus:
    """Select the sub-corpus matching a filter, preserving corpus order.

    The result carries its own content hash over the selected records.
    """
    selected = tuple(v for v in corpus.vignettes if flt.matches(v))
    return Corpus(
        vignettes=selected,
        content_hash=canonical_hash(selected),
        source=corpus.source,
    )
