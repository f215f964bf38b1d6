import pytest
from hypothesis import given
from hypothesis import strategies as st

from screeneval.errors import DomainError
from screeneval.model import (
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
    grade_value_for_task,
    merge_no_mild,
)

severities = st.sampled_from(list(DRSeverity))


def test_merge_examples():
    assert merge_no_mild(DRSeverity.NO_DR) == MergedSeverity.NO_OR_MILD
    assert merge_no_mild(DRSeverity.MILD) == MergedSeverity.NO_OR_MILD
    assert merge_no_mild(DRSeverity.MODERATE) == MergedSeverity.MODERATE
    assert merge_no_mild(DRSeverity.SEVERE) == MergedSeverity.SEVERE
    assert merge_no_mild(DRSeverity.PROLIFERATIVE) == MergedSeverity.PROLIFERATIVE


@given(severities)
def test_merge_idempotent(level):
    merged = merge_no_mild(level)
    assert merge_no_mild(merged) == merged


@given(severities, severities)
def test_merge_order_preserving(a, b):
    if a <= b:
        assert merge_no_mild(a) <= merge_no_mild(b)


def test_ordering_total_and_transitive():
    levels = list(DRSeverity)
    for a in levels:
        for b in levels:
            assert (a < b) or (b < a) or (a == b)
            for c in levels:
                if a <= b and b <= c:
                    assert a <= c


def test_referable_threshold():
    assert not DRSeverity.MILD.referable
    assert DRSeverity.MODERATE.referable
    assert MergedSeverity.NO_OR_MILD.referable is False
    assert MergedSeverity.MODERATE.referable is True


def make_grade(dr_gradable=True, dme_gradable=True, dr=DRSeverity.MODERATE,
               dme=DMEStatus.ABSENT, round=0):
    return GradeRecord(
        image_id="img1",
        grader_id="g1",
        grader_role=GraderRole.REGIONAL_GRADER,
        gradability=Gradability(dr_gradable, dme_gradable),
        dr=dr,
        dme=dme,
        round=round,
    )


def test_grade_record_presence_invariants():
    make_grade()  # valid
    make_grade(dr_gradable=False, dr=None)
    with pytest.raises(DomainError):
        make_grade(dr_gradable=False)  # dr present but ungradable
    with pytest.raises(DomainError):
        make_grade(dr=None)  # dr absent but gradable
    with pytest.raises(DomainError):
        make_grade(dme_gradable=False)
    with pytest.raises(DomainError):
        make_grade(round=-1)


def test_grade_value_for_task():
    record = make_grade(dme_gradable=False, dme=None)
    assert grade_value_for_task(record, Task.DR) == DRSeverity.MODERATE
    assert grade_value_for_task(record, Task.DME) is None
    assert grade_value_for_task(record, Task.DR_GRADABILITY) is True
    assert grade_value_for_task(record, Task.DME_GRADABILITY) is False


def test_confidence_vector_range():
    ConfidenceVector("i", (0.2, 0.2, 0.2, 0.2, 0.2), 0.5, 0.5, 0.5, 0.5)
    with pytest.raises(DomainError):
        ConfidenceVector("i", (0.2, 0.2, 0.2, 0.2, 1.2), 0.5, 0.5, 0.5, 0.5)
    with pytest.raises(DomainError):
        ConfidenceVector("i", (0.2, 0.2, 0.2, 0.2), 0.5, 0.5, 0.5, 0.5)
    with pytest.raises(DomainError):
        ConfidenceVector("i", (0.2,) * 5, -0.1, 0.5, 0.5, 0.5)


def test_image_and_patient_validation():
    ImageRecord("i", "p", 13)
    with pytest.raises(DomainError):
        ImageRecord("i", "p", 14)
    with pytest.raises(DomainError):
        ImageRecord("i", "p", 0)
    PatientRecord("p", 1, 60.0, Sex.F, hba1c=None)
    with pytest.raises(DomainError):
        PatientRecord("p", 1, -1.0, Sex.F)
    with pytest.raises(DomainError):
        PatientRecord("p", 1, 60.0, Sex.M, ldl=-5.0)
