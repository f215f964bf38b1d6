"""Conversion of model confidence vectors into discrete calls.

Binary outputs (DME, DR gradability, DME gradability) use a single inclusive
threshold each. The 5-level DR output uses a cascade: the five scores are
normalized to sum to one, then levels are visited in descending severity and
the first level whose tail mass P(severity >= level) meets its threshold is
returned; if no tail fires the call is No DR. The comparison is inclusive so
thresholds of 0 and 1 act as "always" and "never".

The cascade is monotone (raising a level's threshold never promotes an image
to that level) and scale-invariant in the raw scores.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DegenerateInputError, DomainError
from .model import ConfidenceVector, DMEStatus, DRSeverity, Gradability

# Tail thresholds are keyed by severity, most severe first.
CASCADE_ORDER = (
    DRSeverity.PROLIFERATIVE,
    DRSeverity.SEVERE,
    DRSeverity.MODERATE,
    DRSeverity.MILD,
)


@dataclass(frozen=True)
class CascadeThresholds:
    """Operating-point configuration for all discrete calls, each in [0, 1]."""

    dr_tail_pdr: float
    dr_tail_severe: float
    dr_tail_moderate: float
    dr_tail_mild: float
    dme: float
    dr_gradability: float
    dme_gradability: float

    def __post_init__(self):
        for name in (
            "dr_tail_pdr",
            "dr_tail_severe",
            "dr_tail_moderate",
            "dr_tail_mild",
            "dme",
            "dr_gradability",
            "dme_gradability",
        ):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise DomainError(f"threshold {name}={value} outside [0, 1]")

    def tail_threshold(self, level: DRSeverity) -> float:
        if level == DRSeverity.PROLIFERATIVE:
            return self.dr_tail_pdr
        if level == DRSeverity.SEVERE:
            return self.dr_tail_severe
        if level == DRSeverity.MODERATE:
            return self.dr_tail_moderate
        if level == DRSeverity.MILD:
            return self.dr_tail_mild
        raise DomainError(f"no tail threshold for level {level.name}")


# Shipped defaults; tuned on synthetic cohorts, overridable via the config file.
DEFAULT_THRESHOLDS = CascadeThresholds(
    dr_tail_pdr=0.5,
    dr_tail_severe=0.5,
    dr_tail_moderate=0.5,
    dr_tail_mild=0.5,
    dme=0.5,
    dr_gradability=0.5,
    dme_gradability=0.5,
)


def _check_unit(value: float, name: str) -> None:
    if not (isinstance(value, (int, float)) and math.isfinite(value)):
        raise DomainError(f"{name}={value!r} is not a finite number")
    if not (0.0 <= value <= 1.0):
        raise DomainError(f"{name}={value} outside [0, 1]")


def apply_binary_threshold(score: float, threshold: float) -> bool:
    """Inclusive binary decision: True iff score >= threshold."""
    _check_unit(score, "score")
    _check_unit(threshold, "threshold")
    return score >= threshold


def cascade_dr_severity(
    dr_scores, thresholds: CascadeThresholds = DEFAULT_THRESHOLDS
) -> DRSeverity:
    """Collapse five per-level confidences into a single severity call.

    Scores are normalized to a distribution first, so the call depends only on
    the relative allocation of confidence. An all-zero vector carries no
    information and is rejected.
    """
    scores = list(dr_scores)
    if len(scores) != 5:
        raise DomainError(f"expected 5 DR scores, got {len(scores)}")
    for i, s in enumerate(scores):
        _check_unit(s, f"dr_scores[{i}]")
    total = sum(scores)
    if total == 0.0:
        raise DegenerateInputError("all-zero DR score vector")
    mass = [s / total for s in scores]
    tail = 0.0
    for level in CASCADE_ORDER:
        tail += mass[int(level)]
        if tail >= thresholds.tail_threshold(level):
            return level
    return DRSeverity.NO_DR


def max_confidence(dr_scores, dme_score: float) -> float:
    """Maximum over the five DR scores and the DME score.

    Used to bin images into confidence buckets; the low-confidence bucket is
    defined as maximum strictly below the bin edge.
    """
    scores = list(dr_scores)
    if len(scores) != 5:
        raise DomainError(f"expected 5 DR scores, got {len(scores)}")
    for i, s in enumerate(scores):
        _check_unit(s, f"dr_scores[{i}]")
    _check_unit(dme_score, "dme_score")
    return max(max(scores), dme_score)


def discrete_calls(
    confidence: ConfidenceVector, thresholds: CascadeThresholds = DEFAULT_THRESHOLDS
) -> tuple[Gradability, DRSeverity, DMEStatus]:
    """All discrete calls for one image: gradability pair, DR level, DME."""
    gradability = Gradability(
        dr_gradable=apply_binary_threshold(
            confidence.dr_gradability_score, thresholds.dr_gradability
        ),
        dme_gradable=apply_binary_threshold(
            confidence.dme_gradability_score, thresholds.dme_gradability
        ),
    )
    severity = cascade_dr_severity(confidence.dr_scores, thresholds)
    dme = (
        DMEStatus.REFERABLE
        if apply_binary_threshold(confidence.dme_score, thresholds.dme)
        else DMEStatus.ABSENT
    )
    return gradability, severity, dme
