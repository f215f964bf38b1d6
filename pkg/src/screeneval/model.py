"""Core domain types for DR screening evaluation.

Severity follows the ICDR 5-level scale. Screening analysis additionally uses
a merged 4-category view in which No DR and mild NPDR form a single
non-referable bucket, because differences below moderate NPDR are never
adjudicated. All types here are immutable value objects and safe to share
across threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import DomainError


class DRSeverity(enum.IntEnum):
    """ICDR severity levels, totally ordered from no disease to proliferative."""

    NO_DR = 0
    MILD = 1
    MODERATE = 2
    SEVERE = 3
    PROLIFERATIVE = 4

    @property
    def referable(self) -> bool:
        return self >= DRSeverity.MODERATE


class MergedSeverity(enum.IntEnum):
    """4-category severity with No DR and mild NPDR merged into one bucket."""

    NO_OR_MILD = 0
    MODERATE = 1
    SEVERE = 2
    PROLIFERATIVE = 3

    @property
    def referable(self) -> bool:
        return self >= MergedSeverity.MODERATE


def merge_no_mild(dr: DRSeverity | MergedSeverity) -> MergedSeverity:
    """Collapse No DR and mild NPDR into the single non-referable category.

    Idempotent: values already on the merged scale pass through unchanged.
    """
    if isinstance(dr, MergedSeverity):
        return dr
    if dr <= DRSeverity.MILD:
        return MergedSeverity.NO_OR_MILD
    return MergedSeverity(int(dr) - 1)


class DMEStatus(enum.IntEnum):
    """Referable DME: hard exudates within 1 disc-diameter of the fovea center."""

    ABSENT = 0
    REFERABLE = 1


class Task(str, enum.Enum):
    """The four per-image grading tasks that can be adjudicated."""

    DR = "dr"
    DME = "dme"
    DR_GRADABILITY = "dr_gradability"
    DME_GRADABILITY = "dme_gradability"


class GraderRole(str, enum.Enum):
    REGIONAL_GRADER = "regional_grader"
    ALGORITHM = "algorithm"
    SPECIALIST = "specialist"
    SENIOR_SPECIALIST = "senior_specialist"


class Sex(str, enum.Enum):
    F = "F"
    M = "M"


@dataclass(frozen=True)
class Gradability:
    """Per-task gradability. DR and DME are assessed independently: an image
    may be gradable for one task and not the other, so downstream exclusion
    rules always look at a single task."""

    dr_gradable: bool
    dme_gradable: bool

    def for_task(self, task: Task) -> bool:
        if task in (Task.DR, Task.DR_GRADABILITY):
            return self.dr_gradable
        return self.dme_gradable


def grade_value_for_task(record: "GradeRecord", task: Task):
    """The grade a record carries for one task; None when ungradable."""
    if task == Task.DR:
        return record.dr
    if task == Task.DME:
        return record.dme
    if task == Task.DR_GRADABILITY:
        return record.gradability.dr_gradable
    return record.gradability.dme_gradable


@dataclass(frozen=True)
class GradeRecord:
    """One grader's assessment of one image.

    ``dr`` is present exactly when the image was marked DR-gradable, and
    ``dme`` exactly when DME-gradable. ``round`` is 0 for screening grades and
    >= 1 for adjudication-round grades.
    """

    image_id: str
    grader_id: str
    grader_role: GraderRole
    gradability: Gradability
    dr: DRSeverity | None
    dme: DMEStatus | None
    round: int = 0
    comment: str = ""
    timestamp: str = ""

    def __post_init__(self):
        if (self.dr is None) == self.gradability.dr_gradable:
            raise DomainError(
                f"grade for {self.image_id}: dr must be present iff dr_gradable"
            )
        if (self.dme is None) == self.gradability.dme_gradable:
            raise DomainError(
                f"grade for {self.image_id}: dme must be present iff dme_gradable"
            )
        if self.round < 0:
            raise DomainError(f"grade for {self.image_id}: round must be >= 0")


@dataclass(frozen=True)
class ConfidenceVector:
    """Per-image real-valued model outputs, each in [0, 1].

    ``dr_scores`` holds one confidence per ICDR level, indexed by DRSeverity.
    """

    image_id: str
    dr_scores: tuple[float, float, float, float, float]
    dme_score: float
    dr_gradability_score: float
    dme_gradability_score: float
    quality_score: float

    def __post_init__(self):
        if len(self.dr_scores) != 5:
            raise DomainError(f"{self.image_id}: expected 5 DR scores")
        for name, value in self._named_scores():
            if not (0.0 <= value <= 1.0):
                raise DomainError(
                    f"{self.image_id}: {name}={value} outside [0, 1]"
                )

    def _named_scores(self):
        for level, s in zip(DRSeverity, self.dr_scores):
            yield f"dr_scores[{level.name}]", s
        yield "dme_score", self.dme_score
        yield "dr_gradability_score", self.dr_gradability_score
        yield "dme_gradability_score", self.dme_gradability_score
        yield "quality_score", self.quality_score


N_REGIONS = 13


def _check_region(region: int, owner: str) -> None:
    if not 1 <= region <= N_REGIONS:
        raise DomainError(f"{owner}: region {region} outside 1-{N_REGIONS}")


@dataclass(frozen=True)
class ImageRecord:
    """Image metadata. Single-field macula-centered 45-degree capture is
    assumed by the screening protocol; it is metadata here, never checked."""

    image_id: str
    patient_id: str
    region: int
    camera_make: str = ""
    camera_model: str = ""
    capture_year: int = 0

    def __post_init__(self):
        _check_region(self.region, f"image {self.image_id}")


@dataclass(frozen=True)
class PatientRecord:
    """Patient demographics and labs. Lab values are explicit absences when
    not collected, never sentinel numbers."""

    patient_id: str
    region: int
    age: float
    sex: Sex
    hba1c: float | None = None
    fbs: float | None = None
    ldl: float | None = None

    def __post_init__(self):
        _check_region(self.region, f"patient {self.patient_id}")
        if self.age < 0:
            raise DomainError(f"patient {self.patient_id}: age must be >= 0")
        for name in ("hba1c", "fbs", "ldl"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise DomainError(
                    f"patient {self.patient_id}: {name} must be nonnegative"
                )
