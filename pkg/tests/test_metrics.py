from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize, special

from screeneval import published_counts as pc
from screeneval.errors import DomainError, UndefinedMetricError
from screeneval.metrics import (
    MERGED_CATEGORIES,
    BinaryTarget,
    ConfusionMatrix,
    LabelState,
    clopper_pearson_ci,
    confidence_bin_analysis,
    confusion_matrix,
    dme_pairs_from_counts,
    dr_pairs_from_counts,
    get_target,
    per_region_breakdown,
    quadratic_weighted_kappa,
    roc_auc,
    sensitivity_specificity,
    target_score,
)
from screeneval.model import ConfidenceVector, DMEStatus, MergedSeverity

M = MergedSeverity


# -- confusion matrix ---------------------------------------------------------


def test_confusion_empty_is_zero():
    cm = confusion_matrix([], ("x", "y"))
    assert cm.to_array().sum() == 0


def test_confusion_matches_hand_tally():
    rng = np.random.default_rng(5)
    cats = ("a", "b", "c")
    pairs = [(cats[i], cats[j]) for i, j in rng.integers(0, 3, size=(10, 2))]
    cm = confusion_matrix(pairs, cats)
    tally = Counter(pairs)
    for i, ref in enumerate(cats):
        for j, pred in enumerate(cats):
            assert cm.counts[i][j] == tally[(ref, pred)]
    assert cm.total == 10


def test_confusion_unknown_category():
    with pytest.raises(DomainError):
        confusion_matrix([("a", "zzz")], ("a", "b"))


def test_confusion_reproduces_published_cell():
    pairs = [
        (ref.dr, pred.dr) for ref, pred in dr_pairs_from_counts(pc.DR_GRADER_COUNTS)
    ]
    cm = confusion_matrix(pairs, MERGED_CATEGORIES)
    assert cm.counts[1][0] == 729  # reference moderate called no/mild
    assert cm.total == 25326


# -- sensitivity / specificity --------------------------------------------------


def test_sens_spec_published_grader_referable():
    pairs = dr_pairs_from_counts(pc.DR_GRADER_COUNTS)
    sens, spec = sensitivity_specificity(pairs, get_target("moderate_or_worse"))
    assert round(sens.estimate, 3) == 0.740
    assert round(spec.estimate, 3) == 0.982
    assert sens.n == 3083 and spec.n == 22243
    assert (round(sens.ci_low, 3), round(sens.ci_high, 3)) == (0.724, 0.755)


def test_sens_spec_undefined_without_both_classes():
    pairs = [(LabelState(dr=M.MODERATE), LabelState(dr=M.MODERATE))]
    with pytest.raises(UndefinedMetricError):
        sensitivity_specificity(pairs, get_target("moderate_or_worse"))


def test_union_target_counts():
    target = get_target("severe_or_worse_or_dme")
    pairs = [
        (
            LabelState(dr=M.NO_OR_MILD, dme=DMEStatus.REFERABLE),
            LabelState(dr=M.SEVERE, dme=DMEStatus.ABSENT),
        ),
        (
            LabelState(dr=M.MODERATE, dme=DMEStatus.ABSENT),
            LabelState(dr=M.NO_OR_MILD, dme=DMEStatus.ABSENT),
        ),
    ]
    sens, spec = sensitivity_specificity(pairs, target)
    assert sens.estimate == 1.0  # the DME-positive reference was caught via DR
    assert spec.estimate == 1.0


def test_target_monotonicity_in_severity():
    states = [LabelState(dr=m, dme=DMEStatus.ABSENT) for m in MergedSeverity]
    counts = []
    for name in ("proliferative", "severe_or_worse", "moderate_or_worse"):
        target = get_target(name)
        counts.append(sum(target.is_positive(s) for s in states))
    assert counts == sorted(counts)  # widening the target never loses positives


def test_target_requires_labels():
    with pytest.raises(DomainError):
        get_target("moderate_or_worse").is_positive(LabelState(dr=None, dme=None))
    with pytest.raises(DomainError):
        get_target("dme").is_positive(LabelState(dr=M.MODERATE, dme=None))
    with pytest.raises(DomainError):
        get_target("nonsense")
    with pytest.raises(DomainError):
        BinaryTarget("empty")


# -- Clopper-Pearson -------------------------------------------------------------


def beta_quantile_by_integration(q, a, b):
    """Independent oracle: invert the Beta CDF computed by quadrature."""

    def cdf(x):
        value, _ = integrate.quad(
            lambda u: u ** (a - 1) * (1 - u) ** (b - 1), 0.0, x, limit=200
        )
        return value / special.beta(a, b)

    return optimize.brentq(lambda x: cdf(x) - q, 1e-12, 1 - 1e-12, xtol=1e-12)


def test_clopper_pearson_published_values():
    assert tuple(round(v, 3) for v in clopper_pearson_ci(2281, 3083)) == (0.724, 0.755)
    assert tuple(round(v, 3) for v in clopper_pearson_ci(21843, 22243)) == (0.980, 0.984)


def test_clopper_pearson_boundaries():
    low, high = clopper_pearson_ci(0, 50)
    assert low == 0.0
    assert high == pytest.approx(beta_quantile_by_integration(0.975, 1, 50), abs=1e-9)
    low, high = clopper_pearson_ci(50, 50)
    assert high == 1.0


def test_clopper_pearson_against_integration_oracle():
    low, high = clopper_pearson_ci(5, 10)
    assert low == pytest.approx(beta_quantile_by_integration(0.025, 5, 6), abs=1e-9)
    assert high == pytest.approx(beta_quantile_by_integration(0.975, 6, 5), abs=1e-9)
    assert (round(low, 3), round(high, 3)) == (0.187, 0.813)


def test_clopper_pearson_invalid_counts():
    with pytest.raises(DomainError):
        clopper_pearson_ci(5, 0)
    with pytest.raises(DomainError):
        clopper_pearson_ci(11, 10)
    with pytest.raises(DomainError):
        clopper_pearson_ci(5, 10, level=1.0)


@given(st.integers(0, 60), st.integers(1, 60))
@settings(max_examples=150)
def test_clopper_pearson_contains_point_estimate(k, n):
    if k > n:
        k = n
    low, high = clopper_pearson_ci(k, n)
    assert 0.0 <= low <= k / n <= high <= 1.0


# -- ROC / AUC --------------------------------------------------------------------


def pairwise_rank_oracle(scores, labels):
    """Brute force over every positive-negative pair, half credit for ties."""
    positives = [s for s, l in zip(scores, labels) if l]
    negatives = [s for s, l in zip(scores, labels) if not l]
    correct = ties = 0
    for p in positives:
        for n in negatives:
            if p > n:
                correct += 1
            elif p == n:
                ties += 1
    return (2 * correct + ties) / (2 * len(positives) * len(negatives))


def test_roc_examples():
    _, auc = roc_auc([0.4, 0.8, 0.1, 0.5], [True, True, False, False])
    assert auc == 0.75  # 3 of 4 orderings correct
    _, auc = roc_auc([0.9, 0.8, 0.2, 0.1], [True, True, False, False])
    assert auc == 1.0
    _, auc = roc_auc([0.5, 0.5, 0.5, 0.5], [True, False, True, False])
    assert auc == 0.5


def test_roc_single_class_undefined():
    with pytest.raises(UndefinedMetricError):
        roc_auc([0.1, 0.2], [True, True])


def test_roc_curve_shape():
    curve, _ = roc_auc([0.4, 0.8, 0.1, 0.5], [True, True, False, False])
    assert curve[0] == (0.0, 0.0)
    assert curve[-1] == (1.0, 1.0)
    fprs = [f for f, _ in curve]
    tprs = [t for _, t in curve]
    assert fprs == sorted(fprs)
    assert tprs == sorted(tprs)


def test_roc_equals_rank_statistic_bulk():
    rng = np.random.default_rng(77)
    for _ in range(200):
        n = int(rng.integers(2, 51))
        labels = rng.random(n) < rng.uniform(0.2, 0.8)
        if labels.all() or not labels.any():
            continue
        # ties made likely by quantizing scores
        scores = np.round(rng.random(n), 1)
        _, auc = roc_auc(scores, labels)
        assert abs(auc - pairwise_rank_oracle(scores.tolist(), labels.tolist())) <= 1e-12


# -- quadratic weighted kappa ----------------------------------------------------


def test_kappa_published_matrices():
    grader = ConfusionMatrix(MERGED_CATEGORIES, pc.DR_GRADER_COUNTS)
    algorithm = ConfusionMatrix(MERGED_CATEGORIES, pc.DR_ALGORITHM_COUNTS)
    assert quadratic_weighted_kappa(grader) == pytest.approx(
        pc.PUBLISHED_KAPPA_GRADER, abs=0.01
    )
    assert quadratic_weighted_kappa(algorithm) == pytest.approx(
        pc.PUBLISHED_KAPPA_ALGORITHM, abs=0.01
    )


def test_kappa_perfect_agreement():
    cm = ConfusionMatrix(("a", "b", "c"), ((5, 0, 0), (0, 2, 0), (0, 0, 9)))
    assert quadratic_weighted_kappa(cm) == 1.0


def test_kappa_independent_raters_zero():
    rows = (2, 3, 5)
    cols = (4, 5, 1)
    counts = tuple(tuple(r * c for c in cols) for r in rows)
    cm = ConfusionMatrix(("a", "b", "c"), counts)
    assert quadratic_weighted_kappa(cm) == pytest.approx(0.0, abs=1e-12)


def test_kappa_reversal_invariance():
    # reversing category order preserves |i-j|, so kappa is unchanged
    rng = np.random.default_rng(3)
    counts = rng.integers(0, 30, size=(4, 4))
    counts[0][0] += 5
    reversed_counts = counts[::-1, ::-1]
    k1 = quadratic_weighted_kappa(ConfusionMatrix.from_array(tuple("abcd"), counts))
    k2 = quadratic_weighted_kappa(
        ConfusionMatrix.from_array(tuple("dcba"), reversed_counts)
    )
    assert k1 == pytest.approx(k2, abs=1e-12)


def test_kappa_degenerate_marginals():
    cm = ConfusionMatrix(("a", "b"), ((7, 0), (0, 0)))
    with pytest.raises(UndefinedMetricError):
        quadratic_weighted_kappa(cm)


def test_confusion_matrix_validation():
    with pytest.raises(DomainError):
        ConfusionMatrix(("a", "b"), ((1, 2),))
    with pytest.raises(DomainError):
        ConfusionMatrix(("a", "b"), ((1, -2), (0, 0)))


# -- slices ------------------------------------------------------------------------


def make_scored(image_id, region, ref, grader, algo, dme=None, score_level=None):
    level = score_level if score_level is not None else int(algo)
    scores = [0.04, 0.04, 0.04, 0.04, 0.04]
    scores[level + 1 if level else 0] = 0.84
    confidence = ConfidenceVector(
        image_id=image_id,
        dr_scores=tuple(scores),
        dme_score=0.8 if dme == DMEStatus.REFERABLE else 0.1,
        dr_gradability_score=0.9,
        dme_gradability_score=0.9,
        quality_score=0.9,
    )
    from screeneval.metrics import ScoredImage

    return ScoredImage(
        image_id=image_id,
        region=region,
        reference=LabelState(dr=ref, dme=dme),
        grader=LabelState(dr=grader, dme=dme),
        algorithm=LabelState(dr=algo, dme=dme),
        confidence=confidence,
    )


def region_images(region, seed):
    rng = np.random.default_rng(seed)
    images = []
    for k in range(40):
        ref = M(int(rng.integers(0, 4)))
        grader = M(int(rng.integers(0, 4)))
        algo = M(int(rng.integers(0, 4)))
        dme = DMEStatus(int(rng.integers(0, 2)))
        images.append(make_scored(f"r{region}i{k}", region, ref, grader, algo, dme))
    return images


def test_breakdown_single_region_matches_pooled():
    images = region_images(3, seed=11)
    rows = per_region_breakdown(images, [get_target("moderate_or_worse")])
    assert [r.region for r in rows] == ["all", 3]
    pooled, only = rows
    for key, value in pooled.metrics.items():
        other = only.metrics[key]
        if np.isnan(value.estimate):
            assert np.isnan(other.estimate)
        else:
            assert value.estimate == other.estimate


def test_breakdown_matches_slice_recompute():
    images = region_images(1, 1) + region_images(2, 2) + region_images(3, 3)
    target = get_target("moderate_or_worse")
    rows = per_region_breakdown(images, [target])
    by_region = {r.region: r for r in rows}
    for region in (1, 2, 3):
        sliced = [im for im in images if im.region == region]
        pairs = [(im.reference, im.grader) for im in sliced]
        sens, spec = sensitivity_specificity(pairs, target)
        row = by_region[region]
        assert row.metrics["grader_sensitivity[moderate_or_worse]"].estimate == sens.estimate
        assert row.metrics["grader_specificity[moderate_or_worse]"].estimate == spec.estimate


def test_breakdown_undefined_cell_does_not_abort():
    # region 5 has no referable reference cases: sensitivity undefined there
    healthy = [
        make_scored(f"h{k}", 5, M.NO_OR_MILD, M.NO_OR_MILD, M.NO_OR_MILD)
        for k in range(5)
    ]
    images = region_images(1, 9) + healthy
    rows = per_region_breakdown(images, [get_target("moderate_or_worse")])
    by_region = {r.region: r for r in rows}
    assert np.isnan(
        by_region[5].metrics["grader_sensitivity[moderate_or_worse]"].estimate
    )
    assert not np.isnan(
        by_region[1].metrics["grader_sensitivity[moderate_or_worse]"].estimate
    )


def test_confidence_bins_partition_and_pooled_identity():
    images = region_images(1, 21)
    target = get_target("moderate_or_worse")
    single = confidence_bin_analysis(images, [], [target])
    assert len(single) == 1
    assert single[0].n_images == len(images)
    pooled = per_region_breakdown(images, [target])[0]
    key = "grader_sensitivity[moderate_or_worse]"
    assert single[0].metrics[key].estimate == pooled.metrics[key].estimate

    five = confidence_bin_analysis(images, [0.2, 0.4, 0.6, 0.8], [target])
    assert sum(r.n_images for r in five) == len(images)

    split = confidence_bin_analysis(images, [0.7], [target])
    assert [(r.low, r.high) for r in split] == [(0.0, 0.7), (0.7, 1.0)]


def test_confidence_bins_bad_edges():
    images = region_images(1, 2)
    with pytest.raises(DomainError):
        confidence_bin_analysis(images, [0.7, 0.7], [get_target("dme")])
    with pytest.raises(DomainError):
        confidence_bin_analysis(images, [0.9, 0.2], [get_target("dme")])
    with pytest.raises(DomainError):
        confidence_bin_analysis(images, [0.0], [get_target("dme")])


def test_target_score_routes():
    vector = ConfidenceVector(
        image_id="i",
        dr_scores=(0.1, 0.1, 0.2, 0.3, 0.3),
        dme_score=0.25,
        dr_gradability_score=0.9,
        dme_gradability_score=0.9,
        quality_score=0.9,
    )
    assert target_score(vector, get_target("moderate_or_worse")) == pytest.approx(0.8)
    assert target_score(vector, get_target("severe_or_worse")) == pytest.approx(0.6)
    assert target_score(vector, get_target("dme")) == 0.25
    assert target_score(vector, get_target("severe_or_worse_or_dme")) == pytest.approx(0.6)


def test_dme_pairs_expansion():
    pairs = dme_pairs_from_counts(pc.DME_ALGORITHM_COUNTS)
    sens, spec = sensitivity_specificity(pairs, get_target("dme"))
    assert round(sens.estimate, 3) == 0.940
    assert round(spec.estimate, 3) == 0.982
