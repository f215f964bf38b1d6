import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from screeneval.errors import ContractError, DomainError
from screeneval.model import (
    DMEStatus,
    DRSeverity,
    GradeRecord,
    Gradability,
    GraderRole,
    MergedSeverity,
    Task,
)
from screeneval.published_counts import (
    DME_GRADABILITY_AGREEMENT,
    DR_GRADABILITY_AGREEMENT,
)
from screeneval.sampling import (
    AdjudicationSelection,
    Inclusion,
    SamplingPlan,
    estimate_sample_size,
    proportional_sample_sizes,
    reconcile_gradability,
    select_dme_adjudication,
    select_dr_adjudication,
    select_gradability_adjudication,
)

M = MergedSeverity


def plan(prevalence=0.06, relative_margin=0.10, alpha=0.05, ungradable=0.20):
    return SamplingPlan(prevalence, relative_margin, alpha, 0.80, ungradable, seed=7)


def formula_oracle(p, d, alpha):
    z = stats.norm.ppf(1 - alpha / 2)
    return z * z * p * (1 - p) / (d * d)


def test_sample_size_study_parameters():
    n_core, n_inflated = estimate_sample_size(plan())
    assert n_core == 6018
    assert n_inflated == 7523
    assert n_core == round(formula_oracle(0.06, 0.006, 0.05))


def test_sample_size_symmetric_case():
    # p=0.5 with an absolute margin of 0.025 (relative 0.05 at p=0.5)
    n_core, _ = estimate_sample_size(plan(prevalence=0.5, relative_margin=0.05))
    assert n_core == 1537
    assert n_core == round(formula_oracle(0.5, 0.025, 0.05))


def test_sampling_plan_validation():
    with pytest.raises(DomainError):
        SamplingPlan(0.0, 0.1, 0.05, 0.8, 0.2, seed=1)
    with pytest.raises(DomainError):
        SamplingPlan(0.06, 0.0, 0.05, 0.8, 0.2, seed=1)
    with pytest.raises(DomainError):
        SamplingPlan(0.06, 0.1, 0.05, 0.8, 1.0, seed=1)


def grade(image_id, dr_gradable, dme_gradable=True, role=GraderRole.REGIONAL_GRADER):
    return GradeRecord(
        image_id=image_id,
        grader_id="g",
        grader_role=role,
        gradability=Gradability(dr_gradable, dme_gradable),
        dr=DRSeverity.NO_DR if dr_gradable else None,
        dme=DMEStatus.ABSENT if dme_gradable else None,
    )


@pytest.mark.parametrize(
    "task,counts,included,excluded",
    [
        (Task.DR, DR_GRADABILITY_AGREEMENT, 25348, 4595),
        (Task.DME, DME_GRADABILITY_AGREEMENT, 24332, 5611),
    ],
)
def test_reconcile_reproduces_published_totals(task, counts, included, excluded):
    got_included = got_excluded = 0
    attr = "dr_gradable" if task == Task.DR else "dme_gradable"
    for grader_gradable, row in zip((True, False), counts):
        for algo_gradable, count in zip((True, False), row):
            regional = grade(
                "x",
                dr_gradable=grader_gradable if task == Task.DR else True,
                dme_gradable=grader_gradable if task == Task.DME else True,
            )
            algo = Gradability(
                dr_gradable=algo_gradable if task == Task.DR else True,
                dme_gradable=algo_gradable if task == Task.DME else True,
            )
            outcome = reconcile_gradability(regional, algo, task)
            if outcome == Inclusion.INCLUDE:
                got_included += count
            else:
                got_excluded += count
    assert got_included == included
    assert got_excluded == excluded


def test_reconcile_basic_rules():
    assert (
        reconcile_gradability(grade("a", True), Gradability(True, True), Task.DR)
        == Inclusion.INCLUDE
    )
    assert (
        reconcile_gradability(grade("a", True), Gradability(False, True), Task.DR)
        == Inclusion.EXCLUDE
    )
    assert (
        reconcile_gradability(grade("a", False), Gradability(False, True), Task.DR)
        == Inclusion.EXCLUDE
    )


def test_reconcile_mismatched_ids():
    with pytest.raises(ContractError):
        reconcile_gradability(grade("a", True), grade("b", True), Task.DR)


def test_gradability_selection_study_scale():
    disagreements = {f"i{k}" for k in range(1765 + 1239)}
    picked = select_gradability_adjudication(disagreements, 982, seed=11)
    assert len(picked) == 982
    assert picked <= disagreements
    assert picked == select_gradability_adjudication(disagreements, 982, seed=11)
    assert select_gradability_adjudication(disagreements, len(disagreements), 11) == frozenset(
        disagreements
    )
    with pytest.raises(DomainError):
        select_gradability_adjudication({"a", "b"}, 3, seed=1)


def test_proportional_sizes_example():
    assert proportional_sample_sizes(60, 940, 0.05) == (3, 47)
    assert proportional_sample_sizes(1500, 23500, 0.05) == (75, 1175)


def make_dr_pairs(n_agree_ref, n_agree_non, n_disagree):
    pairs = {}
    k = 0
    for _ in range(n_agree_ref):
        pairs[f"i{k}"] = (M.MODERATE, M.MODERATE)
        k += 1
    for _ in range(n_agree_non):
        pairs[f"i{k}"] = (M.NO_OR_MILD, M.NO_OR_MILD)
        k += 1
    for _ in range(n_disagree):
        pairs[f"i{k}"] = (M.NO_OR_MILD, M.SEVERE)
        k += 1
    return pairs


def test_dr_selection_proportional_synthetic():
    pairs = make_dr_pairs(60, 940, 25)
    selection = select_dr_adjudication(pairs, 3, 47, seed=5)
    assert len(selection.agreed_referable_sample_ids) == 3
    assert len(selection.agreed_nonreferable_sample_ids) == 47
    assert len(selection.disagreement_ids) == 25
    assert selection.all_ids == (
        selection.disagreement_ids
        | selection.agreed_referable_sample_ids
        | selection.agreed_nonreferable_sample_ids
    )


def test_dr_selection_study_configuration_representable():
    pairs = make_dr_pairs(1500, 23500, 100)
    selection = select_dr_adjudication(pairs, 75, 1175, seed=5)
    again = select_dr_adjudication(pairs, 75, 1175, seed=5)
    assert len(selection.agreed_referable_sample_ids) == 75
    assert len(selection.agreed_nonreferable_sample_ids) == 1175
    assert selection == again  # seed determinism


def test_dr_selection_all_disagree():
    pairs = {f"i{k}": (M.NO_OR_MILD, M.MODERATE) for k in range(10)}
    selection = select_dr_adjudication(pairs, 0, 0, seed=5)
    assert selection.disagreement_ids == frozenset(pairs)
    assert not selection.agreed_referable_sample_ids
    assert not selection.agreed_nonreferable_sample_ids


def test_dr_selection_ratio_check():
    pairs = make_dr_pairs(60, 940, 0)
    with pytest.raises(DomainError):
        select_dr_adjudication(pairs, 40, 10, seed=5)


def test_dr_selection_oversized_sample():
    pairs = make_dr_pairs(5, 95, 0)
    with pytest.raises(DomainError):
        select_dr_adjudication(pairs, 10, 190, seed=5)


merged = st.sampled_from(list(MergedSeverity))


@given(
    st.dictionaries(
        st.integers(0, 10_000).map(lambda k: f"i{k}"),
        st.tuples(merged, merged),
        min_size=1,
        max_size=60,
    )
)
@settings(max_examples=100)
def test_every_qualifying_disagreement_selected(pairs):
    selection = select_dr_adjudication(pairs, 0, 0, seed=3)
    expected = {
        image_id
        for image_id, (r, a) in pairs.items()
        if r != a and (r >= M.MODERATE or a >= M.MODERATE)
    }
    assert selection.disagreement_ids == expected


def make_dme_pairs(n_agree_ref, n_agree_non, n_disagree):
    pairs = {}
    k = 0
    for _ in range(n_agree_ref):
        pairs[f"i{k}"] = (DMEStatus.REFERABLE, DMEStatus.REFERABLE)
        k += 1
    for _ in range(n_agree_non):
        pairs[f"i{k}"] = (DMEStatus.ABSENT, DMEStatus.ABSENT)
        k += 1
    for _ in range(n_disagree):
        pairs[f"i{k}"] = (DMEStatus.ABSENT, DMEStatus.REFERABLE)
        k += 1
    return pairs


def test_dme_selection_fractions():
    pairs = make_dme_pairs(40, 360, 30)
    none = select_dme_adjudication(pairs, 0.0, seed=9)
    assert none.disagreement_ids == frozenset(list(pairs)[-30:]) == frozenset(
        i for i, (r, a) in pairs.items() if r != a
    )
    assert not none.agreed_referable_sample_ids
    assert not none.agreed_nonreferable_sample_ids

    everything = select_dme_adjudication(pairs, 1.0, seed=9)
    assert everything.all_ids == frozenset(pairs)

    five_pct = select_dme_adjudication(pairs, 0.05, seed=9)
    sampled = (
        five_pct.agreed_referable_sample_ids | five_pct.agreed_nonreferable_sample_ids
    )
    assert len(sampled) == round(0.05 * 400)
    assert five_pct == select_dme_adjudication(pairs, 0.05, seed=9)
    with pytest.raises(DomainError):
        select_dme_adjudication(pairs, 1.2, seed=9)


def test_selection_sets_disjoint_invariant():
    with pytest.raises(DomainError):
        AdjudicationSelection(
            task=Task.DR,
            disagreement_ids=frozenset({"a"}),
            agreed_referable_sample_ids=frozenset({"a"}),
            agreed_nonreferable_sample_ids=frozenset(),
        )
