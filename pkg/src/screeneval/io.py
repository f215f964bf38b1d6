"""Delimited input/output formats and ingestion with validation.

All inputs are comma-separated text with fixed headers so fixtures stay
diffable and trivial to produce from any source. DR severity is encoded 0-4
in file form; an empty severity or DME cell means the task was ungradable for
that image. Parse failures name the file and line; referential failures list
the offending ids.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .adjudication import Provenance, ReferenceStandardEntry
from .errors import IntegrityError, ParseError
from .model import (
    ConfidenceVector,
    DMEStatus,
    DRSeverity,
    GradeRecord,
    Gradability,
    GraderRole,
    ImageRecord,
    MergedSeverity,
    PatientRecord,
    Sex,
    Task,
)

GRADES_COLUMNS = (
    "image_id", "grader_id", "grader_role", "region", "dr_gradable",
    "dr_severity", "dme_gradable", "dme", "round", "comment",
)
CONFIDENCE_COLUMNS = (
    "image_id", "dr_no", "dr_mild", "dr_moderate", "dr_severe", "dr_pdr",
    "dme", "dr_gradability", "dme_gradability", "quality",
)
IMAGE_COLUMNS = (
    "image_id", "patient_id", "region", "camera_make", "camera_model", "capture_year",
)
PATIENT_COLUMNS = ("patient_id", "region", "age", "sex", "hba1c", "fbs", "ldl")
REFERENCE_COLUMNS = ("image_id", "task", "value", "provenance")
SCRIPT_COLUMNS = ("image_id", "task", "role", "value", "comment")
PAIRS_COLUMNS = (
    "image_id", "region", "reference_dr", "predicted_dr", "reference_dme", "predicted_dme",
)

MERGED_NAMES = {
    "no_mild": MergedSeverity.NO_OR_MILD,
    "moderate": MergedSeverity.MODERATE,
    "severe": MergedSeverity.SEVERE,
    "proliferative": MergedSeverity.PROLIFERATIVE,
}
MERGED_TO_NAME = {v: k for k, v in MERGED_NAMES.items()}
DME_NAMES = {"absent": DMEStatus.ABSENT, "referable": DMEStatus.REFERABLE}
DME_TO_NAME = {v: k for k, v in DME_NAMES.items()}


def _rows(path, columns) -> Iterable[tuple[int, dict]]:
    path = Path(path)
    if not path.exists():
        raise ParseError(path, None, "file does not exist")
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise ParseError(path, 1, "missing header row")
        if tuple(reader.fieldnames) != tuple(columns):
            raise ParseError(
                path, 1,
                f"expected columns {','.join(columns)}, got {','.join(reader.fieldnames)}",
            )
        for row in reader:
            if None in row or any(v is None for v in row.values()):
                raise ParseError(path, reader.line_num, "wrong number of fields")
            yield reader.line_num, row


def _parse_bool(raw: str, path, line, name: str) -> bool:
    if raw == "1":
        return True
    if raw == "0":
        return False
    raise ParseError(path, line, f"{name} must be 0 or 1, got {raw!r}")


def _parse_int(raw: str, path, line, name: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ParseError(path, line, f"{name} must be an integer, got {raw!r}") from None


def _parse_float(raw: str, path, line, name: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ParseError(path, line, f"{name} must be a number, got {raw!r}") from None


def _parse_unit(raw: str, path, line, name: str) -> float:
    value = _parse_float(raw, path, line, name)
    if not 0.0 <= value <= 1.0:
        raise ParseError(path, line, f"{name}={value} outside [0, 1]")
    return value


@dataclass(frozen=True)
class GradeRow:
    """A grades-file row: the GradeRecord plus its denormalized region."""

    record: GradeRecord
    region: int


def read_grades(path) -> list[GradeRow]:
    rows = []
    for line, row in _rows(path, GRADES_COLUMNS):
        try:
            role = GraderRole(row["grader_role"])
        except ValueError:
            raise ParseError(
                path, line, f"unknown grader_role {row['grader_role']!r}"
            ) from None
        dr_gradable = _parse_bool(row["dr_gradable"], path, line, "dr_gradable")
        dme_gradable = _parse_bool(row["dme_gradable"], path, line, "dme_gradable")
        dr = None
        if row["dr_severity"] != "":
            level = _parse_int(row["dr_severity"], path, line, "dr_severity")
            if not 0 <= level <= 4:
                raise ParseError(path, line, f"dr_severity {level} outside 0-4")
            dr = DRSeverity(level)
        dme = None
        if row["dme"] != "":
            dme = DMEStatus(_parse_bool(row["dme"], path, line, "dme"))
        try:
            record = GradeRecord(
                image_id=row["image_id"],
                grader_id=row["grader_id"],
                grader_role=role,
                gradability=Gradability(dr_gradable, dme_gradable),
                dr=dr,
                dme=dme,
                round=_parse_int(row["round"], path, line, "round"),
                comment=row["comment"],
            )
        except ValueError as exc:
            raise ParseError(path, line, str(exc)) from None
        rows.append(GradeRow(record, _parse_int(row["region"], path, line, "region")))
    return rows


def read_confidences(path) -> list[ConfidenceVector]:
    out = []
    for line, row in _rows(path, CONFIDENCE_COLUMNS):
        try:
            out.append(
                ConfidenceVector(
                    image_id=row["image_id"],
                    dr_scores=tuple(
                        _parse_unit(row[c], path, line, c)
                        for c in ("dr_no", "dr_mild", "dr_moderate", "dr_severe", "dr_pdr")
                    ),
                    dme_score=_parse_unit(row["dme"], path, line, "dme"),
                    dr_gradability_score=_parse_unit(
                        row["dr_gradability"], path, line, "dr_gradability"
                    ),
                    dme_gradability_score=_parse_unit(
                        row["dme_gradability"], path, line, "dme_gradability"
                    ),
                    quality_score=_parse_unit(row["quality"], path, line, "quality"),
                )
            )
        except ValueError as exc:
            raise ParseError(path, line, str(exc)) from None
    return out


def read_images(path) -> list[ImageRecord]:
    out = []
    for line, row in _rows(path, IMAGE_COLUMNS):
        try:
            out.append(
                ImageRecord(
                    image_id=row["image_id"],
                    patient_id=row["patient_id"],
                    region=_parse_int(row["region"], path, line, "region"),
                    camera_make=row["camera_make"],
                    camera_model=row["camera_model"],
                    capture_year=_parse_int(row["capture_year"], path, line, "capture_year"),
                )
            )
        except ValueError as exc:
            raise ParseError(path, line, str(exc)) from None
    return out


def read_patients(path) -> list[PatientRecord]:
    out = []
    for line, row in _rows(path, PATIENT_COLUMNS):
        try:
            sex = Sex(row["sex"])
        except ValueError:
            raise ParseError(path, line, f"sex must be F or M, got {row['sex']!r}") from None
        labs = {
            name: (None if row[name] == "" else _parse_float(row[name], path, line, name))
            for name in ("hba1c", "fbs", "ldl")
        }
        try:
            out.append(
                PatientRecord(
                    patient_id=row["patient_id"],
                    region=_parse_int(row["region"], path, line, "region"),
                    age=_parse_float(row["age"], path, line, "age"),
                    sex=sex,
                    **labs,
                )
            )
        except ValueError as exc:
            raise ParseError(path, line, str(exc)) from None
    return out


def _encode_reference_value(task: Task, value) -> str:
    if task == Task.DR:
        return MERGED_TO_NAME[value]
    if task == Task.DME:
        return DME_TO_NAME[value]
    return "1" if value else "0"


def _decode_reference_value(task: Task, raw: str, path, line):
    if task == Task.DR:
        if raw not in MERGED_NAMES:
            raise ParseError(path, line, f"unknown merged severity {raw!r}")
        return MERGED_NAMES[raw]
    if task == Task.DME:
        if raw not in DME_NAMES:
            raise ParseError(path, line, f"unknown DME value {raw!r}")
        return DME_NAMES[raw]
    return _parse_bool(raw, path, line, "value")


def read_reference(path) -> dict[tuple[str, Task], ReferenceStandardEntry]:
    entries: dict[tuple[str, Task], ReferenceStandardEntry] = {}
    for line, row in _rows(path, REFERENCE_COLUMNS):
        try:
            task = Task(row["task"])
        except ValueError:
            raise ParseError(path, line, f"unknown task {row['task']!r}") from None
        try:
            provenance = Provenance(row["provenance"])
        except ValueError:
            raise ParseError(
                path, line, f"unknown provenance {row['provenance']!r}"
            ) from None
        key = (row["image_id"], task)
        if key in entries:
            raise ParseError(path, line, f"duplicate reference entry for {key}")
        entries[key] = ReferenceStandardEntry(
            image_id=row["image_id"],
            task=task,
            value=_decode_reference_value(task, row["value"], path, line),
            provenance=provenance,
        )
    return entries


@dataclass(frozen=True)
class ScriptLine:
    """One scripted specialist submission; rows for the same (image, task,
    role) apply in file order as successive rounds."""

    image_id: str
    task: Task
    role: str  # specialist_a | specialist_b | senior
    value: object
    comment: str = ""


def _decode_script_value(task: Task, raw: str, path, line):
    if task == Task.DR:
        level = _parse_int(raw, path, line, "value")
        if not 0 <= level <= 4:
            raise ParseError(path, line, f"dr value {level} outside 0-4")
        return DRSeverity(level)
    if task == Task.DME:
        return DMEStatus(_parse_bool(raw, path, line, "value"))
    return _parse_bool(raw, path, line, "value")


def read_script(path) -> list[ScriptLine]:
    out = []
    roles = {"specialist_a", "specialist_b", "senior"}
    for line, row in _rows(path, SCRIPT_COLUMNS):
        try:
            task = Task(row["task"])
        except ValueError:
            raise ParseError(path, line, f"unknown task {row['task']!r}") from None
        if row["role"] not in roles:
            raise ParseError(path, line, f"role must be one of {sorted(roles)}")
        out.append(
            ScriptLine(
                image_id=row["image_id"],
                task=task,
                role=row["role"],
                value=_decode_script_value(task, row["value"], path, line),
                comment=row["comment"],
            )
        )
    return out


@dataclass(frozen=True)
class PairRow:
    image_id: str
    region: int
    reference_dr: MergedSeverity | None
    predicted_dr: MergedSeverity | None
    reference_dme: DMEStatus | None
    predicted_dme: DMEStatus | None


def read_pairs(path) -> list[PairRow]:
    out = []
    for line, row in _rows(path, PAIRS_COLUMNS):
        def merged(name):
            raw = row[name]
            if raw == "":
                return None
            if raw not in MERGED_NAMES:
                raise ParseError(path, line, f"unknown merged severity {raw!r} in {name}")
            return MERGED_NAMES[raw]

        def dme(name):
            raw = row[name]
            if raw == "":
                return None
            if raw not in DME_NAMES:
                raise ParseError(path, line, f"unknown DME value {raw!r} in {name}")
            return DME_NAMES[raw]

        if (row["reference_dr"] == "") != (row["predicted_dr"] == ""):
            raise ParseError(path, line, "reference_dr and predicted_dr must pair")
        if (row["reference_dme"] == "") != (row["predicted_dme"] == ""):
            raise ParseError(path, line, "reference_dme and predicted_dme must pair")
        out.append(
            PairRow(
                image_id=row["image_id"],
                region=_parse_int(row["region"], path, line, "region"),
                reference_dr=merged("reference_dr"),
                predicted_dr=merged("predicted_dr"),
                reference_dme=dme("reference_dme"),
                predicted_dme=dme("predicted_dme"),
            )
        )
    return out


# -- writers -------------------------------------------------------------------


def _write_csv(path, columns, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(rows)


def write_grades(path, rows: Iterable[GradeRow]) -> None:
    _write_csv(
        path,
        GRADES_COLUMNS,
        (
            (
                r.record.image_id,
                r.record.grader_id,
                r.record.grader_role.value,
                r.region,
                int(r.record.gradability.dr_gradable),
                "" if r.record.dr is None else int(r.record.dr),
                int(r.record.gradability.dme_gradable),
                "" if r.record.dme is None else int(r.record.dme),
                r.record.round,
                r.record.comment,
            )
            for r in rows
        ),
    )


def write_confidences(path, vectors: Iterable[ConfidenceVector]) -> None:
    def fmt(x: float) -> str:
        return f"{x:.6f}"

    _write_csv(
        path,
        CONFIDENCE_COLUMNS,
        (
            (
                v.image_id,
                *[fmt(s) for s in v.dr_scores],
                fmt(v.dme_score),
                fmt(v.dr_gradability_score),
                fmt(v.dme_gradability_score),
                fmt(v.quality_score),
            )
            for v in vectors
        ),
    )


def write_images(path, images: Iterable[ImageRecord]) -> None:
    _write_csv(
        path,
        IMAGE_COLUMNS,
        (
            (i.image_id, i.patient_id, i.region, i.camera_make, i.camera_model, i.capture_year)
            for i in images
        ),
    )


def write_patients(path, patients: Iterable[PatientRecord]) -> None:
    def lab(x):
        return "" if x is None else f"{x:.1f}"

    _write_csv(
        path,
        PATIENT_COLUMNS,
        (
            (p.patient_id, p.region, f"{p.age:.1f}", p.sex.value, lab(p.hba1c), lab(p.fbs), lab(p.ldl))
            for p in patients
        ),
    )


def write_reference(path, entries: Iterable[ReferenceStandardEntry]) -> None:
    _write_csv(
        path,
        REFERENCE_COLUMNS,
        (
            (
                e.image_id,
                e.task.value,
                _encode_reference_value(e.task, e.value),
                e.provenance.value,
            )
            for e in sorted(entries, key=lambda e: (e.task.value, e.image_id))
        ),
    )


def write_script(path, lines: Iterable[ScriptLine]) -> None:
    def encode(task: Task, value) -> str:
        if task == Task.DR:
            return str(int(value))
        if task == Task.DME:
            return str(int(value))
        return "1" if value else "0"

    _write_csv(
        path,
        SCRIPT_COLUMNS,
        (
            (s.image_id, s.task.value, s.role, encode(s.task, s.value), s.comment)
            for s in lines
        ),
    )


def write_pairs(path, rows: Iterable[PairRow]) -> None:
    _write_csv(
        path,
        PAIRS_COLUMNS,
        (
            (
                r.image_id,
                r.region,
                "" if r.reference_dr is None else MERGED_TO_NAME[r.reference_dr],
                "" if r.predicted_dr is None else MERGED_TO_NAME[r.predicted_dr],
                "" if r.reference_dme is None else DME_TO_NAME[r.reference_dme],
                "" if r.predicted_dme is None else DME_TO_NAME[r.predicted_dme],
            )
            for r in rows
        ),
    )


# -- ingestion ------------------------------------------------------------------


@dataclass
class Dataset:
    """Fully validated input set with referential integrity established."""

    images: dict[str, ImageRecord]
    patients: dict[str, PatientRecord]
    regional_grades: dict[str, GradeRecord]
    confidences: dict[str, ConfidenceVector]
    all_grades: list[GradeRow] = field(default_factory=list)
    reference: dict[tuple[str, Task], ReferenceStandardEntry] | None = None

    def region_of(self, image_id: str) -> int:
        return self.images[image_id].region


def ingest(
    grades_path, confidences_path, images_path, patients_path, reference_path=None
) -> Dataset:
    """Load and cross-validate the full input set.

    Every grade and confidence must reference a known image, every image a
    known patient; regions on grade rows must match the image record; each
    image carries exactly one regional (round-0) grade and one confidence
    vector.
    """
    images = {}
    for image in read_images(images_path):
        if image.image_id in images:
            raise IntegrityError("duplicate image ids", [image.image_id])
        images[image.image_id] = image
    patients = {}
    for patient in read_patients(patients_path):
        if patient.patient_id in patients:
            raise IntegrityError("duplicate patient ids", [patient.patient_id])
        patients[patient.patient_id] = patient

    orphans = sorted(
        i.image_id for i in images.values() if i.patient_id not in patients
    )
    if orphans:
        raise IntegrityError("images referencing unknown patients", orphans)
    mismatched = sorted(
        i.image_id
        for i in images.values()
        if i.region != patients[i.patient_id].region
    )
    if mismatched:
        raise IntegrityError("image region differs from patient region", mismatched)

    grade_rows = read_grades(grades_path)
    dangling = sorted({g.record.image_id for g in grade_rows} - set(images))
    if dangling:
        raise IntegrityError("grades referencing unknown images", dangling)
    bad_region = sorted(
        g.record.image_id for g in grade_rows if g.region != images[g.record.image_id].region
    )
    if bad_region:
        raise IntegrityError("grade region differs from image region", bad_region)

    regional = {}
    for g in grade_rows:
        if g.record.grader_role != GraderRole.REGIONAL_GRADER or g.record.round != 0:
            continue
        if g.record.image_id in regional:
            raise IntegrityError("multiple regional grades", [g.record.image_id])
        regional[g.record.image_id] = g.record
    missing = sorted(set(images) - set(regional))
    if missing:
        raise IntegrityError("images without a regional grade", missing)

    confidences = {}
    for vector in read_confidences(confidences_path):
        if vector.image_id not in images:
            raise IntegrityError(
                "confidences referencing unknown images", [vector.image_id]
            )
        if vector.image_id in confidences:
            raise IntegrityError("duplicate confidence vectors", [vector.image_id])
        confidences[vector.image_id] = vector
    missing = sorted(set(images) - set(confidences))
    if missing:
        raise IntegrityError("images without a confidence vector", missing)

    reference = read_reference(reference_path) if reference_path else None
    if reference:
        dangling = sorted({k[0] for k in reference} - set(images))
        if dangling:
            raise IntegrityError("reference entries for unknown images", dangling)

    return Dataset(
        images=images,
        patients=patients,
        regional_grades=regional,
        confidences=confidences,
        all_grades=grade_rows,
        reference=reference,
    )
