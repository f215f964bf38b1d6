"""Agreement and diagnostic-accuracy statistics.

Point estimates follow the usual screening conventions: sensitivity and
specificity carry exact Clopper-Pearson binomial intervals, chance-corrected
agreement on the merged 4-category DR scale uses quadratic-weighted kappa,
and ranking quality uses the trapezoidal ROC area, which with half-credit for
ties equals the probability that a random positive outscores a random
negative. Resampling-based intervals and significance tests live in
``resampling``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import special

from .cascade import max_confidence
from .errors import DomainError, UndefinedMetricError
from .model import ConfidenceVector, DMEStatus, MergedSeverity

MERGED_CATEGORIES = tuple(MergedSeverity)
MERGED_LABELS = ("no_mild", "moderate", "severe", "proliferative")


class CIMethod(str, enum.Enum):
    CLOPPER_PEARSON = "clopper_pearson"
    BOOTSTRAP_PERCENTILE = "bootstrap_percentile"
    NONE = "none"


@dataclass(frozen=True)
class MetricResult:
    """Point estimate with its interval, sample size, and CI provenance."""

    name: str
    estimate: float
    ci_low: float | None
    ci_high: float | None
    ci_method: CIMethod
    n: int

    def __post_init__(self):
        if self.ci_method != CIMethod.NONE:
            if self.ci_low is None or self.ci_high is None:
                raise DomainError(f"{self.name}: CI method set but bounds missing")
            if not (self.ci_low <= self.estimate <= self.ci_high):
                raise DomainError(
                    f"{self.name}: estimate {self.estimate} outside "
                    f"[{self.ci_low}, {self.ci_high}]"
                )


@dataclass(frozen=True)
class ConfusionMatrix:
    """Square count matrix indexed (reference, predicted) in category order."""

    categories: tuple
    counts: tuple

    def __post_init__(self):
        k = len(self.categories)
        if k < 1 or len(self.counts) != k or any(len(row) != k for row in self.counts):
            raise DomainError("counts must be square and match the category list")
        if any(c < 0 or int(c) != c for row in self.counts for c in row):
            raise DomainError("counts must be nonnegative integers")

    @classmethod
    def from_array(cls, categories, counts) -> "ConfusionMatrix":
        arr = np.asarray(counts)
        return cls(tuple(categories), tuple(tuple(int(c) for c in row) for row in arr))

    def to_array(self) -> np.ndarray:
        return np.array(self.counts, dtype=np.int64)

    @property
    def total(self) -> int:
        return int(self.to_array().sum())

    def binarize(self, positive_from: int) -> tuple[int, int, int, int]:
        """Counts (tp, fn, fp, tn) treating categories[positive_from:] as positive."""
        if not 0 < positive_from < len(self.categories):
            raise DomainError("positive_from must split the categories in two")
        m = self.to_array()
        pos = slice(positive_from, None)
        neg = slice(0, positive_from)
        tp = int(m[pos, pos].sum())
        fn = int(m[pos, neg].sum())
        fp = int(m[neg, pos].sum())
        tn = int(m[neg, neg].sum())
        return tp, fn, fp, tn


def confusion_matrix(pairs: Iterable[tuple], categories) -> ConfusionMatrix:
    """Tally (reference, predicted) pairs into a ConfusionMatrix."""
    categories = tuple(categories)
    index = {c: i for i, c in enumerate(categories)}
    counts = np.zeros((len(categories), len(categories)), dtype=np.int64)
    for reference, predicted in pairs:
        try:
            counts[index[reference], index[predicted]] += 1
        except KeyError as exc:
            raise DomainError(f"value {exc.args[0]!r} not in categories") from None
    return ConfusionMatrix.from_array(categories, counts)


# -- binary targets ----------------------------------------------------------


@dataclass(frozen=True)
class LabelState:
    """Merged DR severity and DME status for one image under one rater.
    Either field may be None when the image was not scored for that task."""

    dr: MergedSeverity | None = None
    dme: DMEStatus | None = None


@dataclass(frozen=True)
class BinaryTarget:
    """Positivity predicate applied to both reference and prediction.

    ``dr_threshold`` makes every severity at or above it positive, so
    positivity is monotone in DR severity; ``include_dme`` adds referable DME
    as an alternative trigger (union targets).
    """

    name: str
    dr_threshold: MergedSeverity | None = None
    include_dme: bool = False

    def __post_init__(self):
        if self.dr_threshold is None and not self.include_dme:
            raise DomainError(f"target {self.name} matches nothing")

    @property
    def requires_dr(self) -> bool:
        return self.dr_threshold is not None

    @property
    def requires_dme(self) -> bool:
        return self.include_dme

    def is_positive(self, state: LabelState) -> bool:
        if self.requires_dr and state.dr is None:
            raise DomainError(f"target {self.name} needs a DR label")
        if self.requires_dme and state.dme is None:
            raise DomainError(f"target {self.name} needs a DME label")
        positive = False
        if self.requires_dr:
            positive = positive or state.dr >= self.dr_threshold
        if self.include_dme:
            positive = positive or state.dme == DMEStatus.REFERABLE
        return positive


TARGETS = {
    t.name: t
    for t in (
        BinaryTarget("moderate_or_worse", dr_threshold=MergedSeverity.MODERATE),
        BinaryTarget("severe_or_worse", dr_threshold=MergedSeverity.SEVERE),
        BinaryTarget("proliferative", dr_threshold=MergedSeverity.PROLIFERATIVE),
        BinaryTarget("dme", include_dme=True),
        BinaryTarget(
            "moderate_or_worse_or_dme",
            dr_threshold=MergedSeverity.MODERATE,
            include_dme=True,
        ),
        BinaryTarget(
            "severe_or_worse_or_dme",
            dr_threshold=MergedSeverity.SEVERE,
            include_dme=True,
        ),
        BinaryTarget(
            "proliferative_or_dme",
            dr_threshold=MergedSeverity.PROLIFERATIVE,
            include_dme=True,
        ),
    )
}


def get_target(name: str) -> BinaryTarget:
    try:
        return TARGETS[name]
    except KeyError:
        raise DomainError(
            f"unknown target {name!r}; available: {', '.join(sorted(TARGETS))}"
        ) from None


def binary_counts(
    pairs: Iterable[tuple[LabelState, LabelState]], target: BinaryTarget
) -> tuple[int, int, int, int]:
    """Counts (tp, fn, fp, tn) of (reference, predicted) pairs under a target."""
    tp = fn = fp = tn = 0
    for reference, predicted in pairs:
        ref_pos = target.is_positive(reference)
        pred_pos = target.is_positive(predicted)
        if ref_pos:
            tp, fn = (tp + 1, fn) if pred_pos else (tp, fn + 1)
        else:
            fp, tn = (fp + 1, tn) if pred_pos else (fp, tn + 1)
    return tp, fn, fp, tn


def clopper_pearson_ci(
    successes: int, trials: int, level: float = 0.95
) -> tuple[float, float]:
    """Exact binomial interval from Beta quantiles.

    Lower bound is the alpha/2 quantile of Beta(k, n-k+1) (0 when k=0), upper
    the 1-alpha/2 quantile of Beta(k+1, n-k) (1 when k=n). Quantiles come from
    the inverse regularized incomplete beta function.
    """
    if trials < 1 or not 0 <= successes <= trials:
        raise DomainError(f"invalid counts k={successes}, n={trials}")
    if not (0.0 < level < 1.0):
        raise DomainError(f"level={level} outside (0, 1)")
    alpha = 1.0 - level
    k, n = successes, trials
    low = 0.0 if k == 0 else float(special.betaincinv(k, n - k + 1, alpha / 2.0))
    high = 1.0 if k == n else float(special.betaincinv(k + 1, n - k, 1.0 - alpha / 2.0))
    return low, high


def _proportion_result(name: str, numerator: int, denominator: int, level: float) -> MetricResult:
    low, high = clopper_pearson_ci(numerator, denominator, level)
    return MetricResult(
        name=name,
        estimate=numerator / denominator,
        ci_low=low,
        ci_high=high,
        ci_method=CIMethod.CLOPPER_PEARSON,
        n=denominator,
    )


def sensitivity_specificity(
    pairs: Sequence[tuple[LabelState, LabelState]],
    target: BinaryTarget,
    level: float = 0.95,
) -> tuple[MetricResult, MetricResult]:
    """Sensitivity and specificity of predictions against the reference under
    a binary target, with Clopper-Pearson intervals."""
    tp, fn, fp, tn = binary_counts(pairs, target)
    return sensitivity_specificity_from_counts(tp, fn, fp, tn, target.name, level)


def sensitivity_specificity_from_counts(
    tp: int, fn: int, fp: int, tn: int, target_name: str = "", level: float = 0.95
) -> tuple[MetricResult, MetricResult]:
    suffix = f"[{target_name}]" if target_name else ""
    if tp + fn == 0:
        raise UndefinedMetricError(f"sensitivity{suffix}: no positive reference cases")
    if tn + fp == 0:
        raise UndefinedMetricError(f"specificity{suffix}: no negative reference cases")
    return (
        _proportion_result(f"sensitivity{suffix}", tp, tp + fn, level),
        _proportion_result(f"specificity{suffix}", tn, tn + fp, level),
    )


# -- ROC ---------------------------------------------------------------------


def roc_auc(scores: Sequence[float], labels: Sequence[bool]) -> tuple[list, float]:
    """ROC curve at every distinct threshold plus the trapezoidal area.

    The area is accumulated in integer arithmetic and divided once, so it
    equals the pairwise rank statistic (ties at half credit) exactly, not just
    to rounding.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape or scores.ndim != 1 or scores.size == 0:
        raise DomainError("scores and labels must be equal-length 1-d sequences")
    if not np.all(np.isfinite(scores)):
        raise DomainError("scores must be finite")
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC needs both classes present")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    # Threshold boundaries sit where the sorted score changes.
    boundaries = np.nonzero(np.diff(sorted_scores))[0]
    idx = np.concatenate([boundaries, [scores.size - 1]])
    tps = np.cumsum(sorted_labels)[idx]
    fps = idx + 1 - tps

    curve = [(0.0, 0.0)]
    curve.extend(
        (float(fp) / n_neg, float(tp) / n_pos) for fp, tp in zip(fps, tps)
    )
    twice_area = 0
    prev_tp = prev_fp = 0
    for tp, fp in zip(tps.tolist(), fps.tolist()):
        twice_area += (fp - prev_fp) * (tp + prev_tp)
        prev_tp, prev_fp = tp, fp
    return curve, twice_area / (2 * n_pos * n_neg)


# -- kappa ---------------------------------------------------------------------


def quadratic_weighted_kappa(cm: ConfusionMatrix) -> float:
    """Chance-corrected agreement with squared-distance penalties.

    kappa = 1 - sum(w * O) / sum(w * E) with w[i][j] = (i-j)^2 / (k-1)^2,
    O the observed proportion matrix and E the outer product of its marginals.
    """
    m = cm.to_array().astype(float)
    k = m.shape[0]
    if k < 2:
        raise DomainError("kappa needs at least 2 categories")
    total = m.sum()
    if total == 0:
        raise UndefinedMetricError("kappa undefined on an empty matrix")
    observed = m / total
    row_marg = observed.sum(axis=1)
    col_marg = observed.sum(axis=0)
    idx = np.arange(k)
    weights = (idx[:, None] - idx[None, :]) ** 2 / (k - 1) ** 2
    expected_disagreement = float((weights * np.outer(row_marg, col_marg)).sum())
    if expected_disagreement == 0.0:
        raise UndefinedMetricError(
            "kappa undefined: both raters concentrate all mass in one category"
        )
    return 1.0 - float((weights * observed).sum()) / expected_disagreement


# -- slices: regions and confidence bins --------------------------------------


@dataclass(frozen=True)
class ScoredImage:
    """One image scored against the reference by both raters.

    ``reference``, ``grader`` and ``algorithm`` hold merged DR and/or DME
    labels; a task the image was not scored for stays None in all three.
    ``confidence`` enables ROC and confidence-bin analyses when present.
    """

    image_id: str
    region: int
    reference: LabelState
    grader: LabelState
    algorithm: LabelState
    confidence: ConfidenceVector | None = None


RATERS = ("grader", "algorithm")


def _rater_state(image: ScoredImage, rater: str) -> LabelState:
    return getattr(image, rater)


def _scorable(images, target: BinaryTarget) -> list:
    picked = []
    for image in images:
        states = (image.reference, image.grader, image.algorithm)
        if target.requires_dr and any(s.dr is None for s in states):
            continue
        if target.requires_dme and any(s.dme is None for s in states):
            continue
        picked.append(image)
    return picked


def target_score(confidence: ConfidenceVector, target: BinaryTarget) -> float:
    """Continuous positivity score for ROC analysis of a target.

    DR thresholds use the normalized tail mass at the threshold level; DME
    uses the DME confidence; union targets take the larger trigger.
    """
    parts = []
    if target.requires_dr:
        total = sum(confidence.dr_scores)
        if total == 0:
            raise DomainError(f"{confidence.image_id}: all-zero DR scores")
        start = int(target.dr_threshold) + 1  # merged index -> 5-level index
        parts.append(sum(confidence.dr_scores[start:]) / total)
    if target.requires_dme:
        parts.append(confidence.dme_score)
    return max(parts)


def undefined_metric(name: str, n: int) -> MetricResult:
    """Placeholder row cell for a metric that is undefined on this slice."""
    return MetricResult(
        name=name, estimate=float("nan"), ci_low=None, ci_high=None,
        ci_method=CIMethod.NONE, n=n,
    )


def _safe_sens_spec(pairs, target, level):
    try:
        return sensitivity_specificity(pairs, target, level)
    except UndefinedMetricError:
        n = len(pairs)
        return (
            undefined_metric(f"sensitivity[{target.name}]", n),
            undefined_metric(f"specificity[{target.name}]", n),
        )


def _slice_metrics(images, targets, level) -> dict:
    """Per-target grader/algorithm metrics plus merged-scale kappas for one
    slice of images. Undefined cells become NaN results, never an abort."""
    out: dict = {}
    for target in targets:
        scorable = _scorable(images, target)
        for rater in RATERS:
            pairs = [(im.reference, _rater_state(im, rater)) for im in scorable]
            sens, spec = _safe_sens_spec(pairs, target, level)
            out[f"{rater}_sensitivity[{target.name}]"] = sens
            out[f"{rater}_specificity[{target.name}]"] = spec
        with_scores = [im for im in scorable if im.confidence is not None]
        if with_scores:
            scores = [target_score(im.confidence, target) for im in with_scores]
            labels = [target.is_positive(im.reference) for im in with_scores]
            try:
                _, auc = roc_auc(scores, labels)
                out[f"algorithm_auc[{target.name}]"] = MetricResult(
                    name=f"auc[{target.name}]", estimate=auc, ci_low=None,
                    ci_high=None, ci_method=CIMethod.NONE, n=len(with_scores),
                )
            except UndefinedMetricError:
                out[f"algorithm_auc[{target.name}]"] = undefined_metric(
                    f"auc[{target.name}]", len(with_scores)
                )
    dr_scored = [
        im for im in images
        if im.reference.dr is not None and im.grader.dr is not None
        and im.algorithm.dr is not None
    ]
    for rater in RATERS:
        name = f"{rater}_kappa[dr]"
        if not dr_scored:
            out[name] = undefined_metric(name, 0)
            continue
        cm = confusion_matrix(
            [(im.reference.dr, _rater_state(im, rater).dr) for im in dr_scored],
            MERGED_CATEGORIES,
        )
        try:
            out[name] = MetricResult(
                name=name, estimate=quadratic_weighted_kappa(cm), ci_low=None,
                ci_high=None, ci_method=CIMethod.NONE, n=len(dr_scored),
            )
        except UndefinedMetricError:
            out[name] = undefined_metric(name, len(dr_scored))
    return out


@dataclass(frozen=True)
class BreakdownRow:
    region: int | str  # 1..13 or "all"
    n_images: int
    metrics: dict


def per_region_breakdown(
    images: Sequence[ScoredImage], targets: Sequence[BinaryTarget], level: float = 0.95
) -> list[BreakdownRow]:
    """Rows of per-region metrics plus a pooled "all" row.

    A region where some metric is undefined still gets a row; only the
    affected cells are flagged. Regional graders only grade their own region,
    so the pooled row is the composite over every image.
    """
    rows = [BreakdownRow("all", len(images), _slice_metrics(images, targets, level))]
    for region in sorted({im.region for im in images}):
        sliced = [im for im in images if im.region == region]
        rows.append(BreakdownRow(region, len(sliced), _slice_metrics(sliced, targets, level)))
    return rows


@dataclass(frozen=True)
class ConfidenceBinRow:
    low: float
    high: float
    n_images: int
    metrics: dict


def confidence_bin_analysis(
    images: Sequence[ScoredImage],
    bin_edges: Sequence[float],
    targets: Sequence[BinaryTarget],
    level: float = 0.95,
) -> list[ConfidenceBinRow]:
    """Per-bin grader and algorithm metrics, binned by the algorithm's
    maximum confidence. Bins are [low, high) except the last, which closes at
    1, so an edge at 0.7 makes "uncertain" mean strictly below 0.7."""
    edges = list(bin_edges)
    if any(not 0.0 <= e <= 1.0 for e in edges):
        raise DomainError("bin edges must lie in [0, 1]")
    if sorted(set(edges)) != edges:
        raise DomainError("bin edges must be strictly increasing")
    bounds = [0.0] + edges + [1.0]
    if bounds != sorted(set(bounds)):
        raise DomainError("bin edges must lie strictly inside (0, 1)")

    scored = [im for im in images if im.confidence is not None]
    rows = []
    for i in range(len(bounds) - 1):
        low, high = bounds[i], bounds[i + 1]
        last = i == len(bounds) - 2
        members = []
        for im in scored:
            peak = max_confidence(im.confidence.dr_scores, im.confidence.dme_score)
            if (low <= peak < high) or (last and peak == high):
                members.append(im)
        rows.append(
            ConfidenceBinRow(low, high, len(members), _slice_metrics(members, targets, level))
        )
    if sum(r.n_images for r in rows) != len(scored):
        raise DomainError("confidence bins failed to partition the images")
    return rows


# -- helpers for tests and fixture expansion ---------------------------------


def dr_pairs_from_counts(counts) -> list[tuple[LabelState, LabelState]]:
    """Expand a merged-scale count matrix into (reference, predicted) pairs."""
    pairs = []
    for i, row in enumerate(counts):
        for j, c in enumerate(row):
            pairs.extend(
                [(LabelState(dr=MergedSeverity(i)), LabelState(dr=MergedSeverity(j)))] * int(c)
            )
    return pairs


def dme_pairs_from_counts(counts) -> list[tuple[LabelState, LabelState]]:
    pairs = []
    for i, row in enumerate(counts):
        for j, c in enumerate(row):
            pairs.extend(
                [(LabelState(dme=DMEStatus(i)), LabelState(dme=DMEStatus(j)))] * int(c)
            )
    return pairs
