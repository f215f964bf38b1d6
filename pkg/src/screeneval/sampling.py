"""Sample-size estimation, gradability reconciliation, and adjudication
subset selection.

Selection is deterministic: uniform sampling without replacement is a partial
Fisher-Yates shuffle over the sorted id list, driven by a named substream of
the configured seed. Disagreements are never sampled; every qualifying
disagreement enters the adjudication set.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from scipy import stats

from .errors import ContractError, DomainError
from .model import DMEStatus, GradeRecord, Gradability, MergedSeverity, Task
from .rng import substream_rng

REFERABLE = MergedSeverity.MODERATE


@dataclass(frozen=True)
class SamplingPlan:
    """Inputs for the single-proportion sample-size estimate.

    ``relative_margin`` is the margin of error as a fraction of the prevalence
    (an absolute margin of the same nominal size would need only a few dozen
    patients, which cannot be what a screening study means by it).
    """

    prevalence: float
    relative_margin: float
    alpha: float
    power: float
    ungradable_rate: float
    seed: int

    def __post_init__(self):
        for name in ("prevalence", "relative_margin", "alpha", "power", "ungradable_rate"):
            value = getattr(self, name)
            if not (0.0 < value < 1.0):
                raise DomainError(f"{name}={value} outside (0, 1)")


def estimate_sample_size(plan: SamplingPlan) -> tuple[int, int]:
    """Core and ungradability-inflated patient counts.

    n_core = z^2 p (1-p) / d^2 rounded to the nearest integer, with
    d = relative_margin * prevalence and z the two-sided normal quantile for
    alpha. The inflated count divides by the expected gradable fraction and
    rounds up.
    """
    p = plan.prevalence
    d = plan.relative_margin * p
    if d <= 0.0:
        raise DomainError("margin of error must be positive")
    z = stats.norm.ppf(1.0 - plan.alpha / 2.0)
    n_core = round(z * z * p * (1.0 - p) / (d * d))
    n_inflated = math.ceil(n_core / (1.0 - plan.ungradable_rate))
    return int(n_core), int(n_inflated)


class Inclusion(str, enum.Enum):
    INCLUDE = "include"
    EXCLUDE = "exclude"


def reconcile_gradability(
    regional: GradeRecord, algorithm: GradeRecord | Gradability, task: Task
) -> Inclusion:
    """Include an image for a task only when both sources call it gradable.

    Either source marking the task ungradable excludes the image from scoring.
    """
    if task not in (Task.DR, Task.DME):
        raise DomainError(f"reconciliation applies to DR/DME scoring, not {task}")
    if isinstance(algorithm, GradeRecord):
        if algorithm.image_id != regional.image_id:
            raise ContractError(
                f"gradability reconciliation across images "
                f"{regional.image_id} vs {algorithm.image_id}"
            )
        algo_gradability = algorithm.gradability
    else:
        algo_gradability = algorithm
    both = regional.gradability.for_task(task) and algo_gradability.for_task(task)
    return Inclusion.INCLUDE if both else Inclusion.EXCLUDE


def _uniform_subset(ids, target: int, seed: int, stream: str) -> frozenset:
    population = sorted(ids)
    if target > len(population):
        raise DomainError(
            f"requested sample of {target} exceeds population of {len(population)}"
        )
    if target < 0:
        raise DomainError("sample size must be nonnegative")
    rng = substream_rng(seed, "sampling", stream)
    picked = rng.choice(len(population), size=target, replace=False)
    return frozenset(population[i] for i in picked)


def select_gradability_adjudication(disagreements, target: int, seed: int) -> frozenset:
    """Uniform random subset of gradability disagreements for adjudication."""
    return _uniform_subset(disagreements, target, seed, "gradability")


@dataclass(frozen=True)
class AdjudicationSelection:
    """Image ids routed to specialist adjudication for one task.

    The three sets are pairwise disjoint: disagreements are taken exhaustively
    and the two agreement samples come from disjoint strata.
    """

    task: Task
    disagreement_ids: frozenset
    agreed_referable_sample_ids: frozenset
    agreed_nonreferable_sample_ids: frozenset

    def __post_init__(self):
        a, b, c = (
            self.disagreement_ids,
            self.agreed_referable_sample_ids,
            self.agreed_nonreferable_sample_ids,
        )
        if a & b or a & c or b & c:
            raise DomainError("selection id sets must be pairwise disjoint")

    @property
    def all_ids(self) -> frozenset:
        return (
            self.disagreement_ids
            | self.agreed_referable_sample_ids
            | self.agreed_nonreferable_sample_ids
        )


def proportional_sample_sizes(
    n_referable: int, n_nonreferable: int, fraction: float
) -> tuple[int, int]:
    """Per-stratum sample sizes for a given overall sampling fraction,
    keeping the referable:nonreferable ratio of the population."""
    if not (0.0 <= fraction <= 1.0):
        raise DomainError(f"fraction={fraction} outside [0, 1]")
    return round(fraction * n_referable), round(fraction * n_nonreferable)


def _check_proportional(n_ref: int, n_non: int, pop_ref: int, pop_non: int) -> None:
    total_req = n_ref + n_non
    total_pop = pop_ref + pop_non
    if total_req == 0 or total_pop == 0:
        return
    implied = total_req / total_pop
    if abs(n_ref - implied * pop_ref) > 1.0 or abs(n_non - implied * pop_non) > 1.0:
        raise DomainError(
            "agreement sample sizes must keep the referable:nonreferable ratio "
            f"of the population (requested {n_ref}/{n_non} against strata "
            f"{pop_ref}/{pop_non})"
        )


def select_dr_adjudication(
    pairs: dict,
    n_agreed_referable: int,
    n_agreed_nonreferable: int,
    seed: int,
) -> AdjudicationSelection:
    """Adjudication set for the DR task.

    ``pairs`` maps image_id to (regional call, algorithm call) on the merged
    4-category scale, restricted to images gradable by both sources. Every
    image where the calls differ and at least one is moderate or worse is
    selected; the two agreement strata are sampled uniformly at the requested
    sizes, which must be proportional to the strata within rounding.
    """
    disagreements = set()
    agreed_referable = set()
    agreed_nonreferable = set()
    for image_id, (regional, algorithm) in pairs.items():
        regional = MergedSeverity(regional)
        algorithm = MergedSeverity(algorithm)
        if regional != algorithm:
            if regional >= REFERABLE or algorithm >= REFERABLE:
                disagreements.add(image_id)
        elif regional >= REFERABLE:
            agreed_referable.add(image_id)
        else:
            agreed_nonreferable.add(image_id)

    _check_proportional(
        n_agreed_referable,
        n_agreed_nonreferable,
        len(agreed_referable),
        len(agreed_nonreferable),
    )
    return AdjudicationSelection(
        task=Task.DR,
        disagreement_ids=frozenset(disagreements),
        agreed_referable_sample_ids=_uniform_subset(
            agreed_referable, n_agreed_referable, seed, "dr_agreed_referable"
        ),
        agreed_nonreferable_sample_ids=_uniform_subset(
            agreed_nonreferable, n_agreed_nonreferable, seed, "dr_agreed_nonreferable"
        ),
    )


def select_dme_adjudication(pairs: dict, fraction: float, seed: int) -> AdjudicationSelection:
    """Adjudication set for the DME task.

    All binary disagreements are selected; a uniform ``fraction`` of the
    agreements is added, bucketed by the agreed value.
    """
    if not (0.0 <= fraction <= 1.0):
        raise DomainError(f"fraction={fraction} outside [0, 1]")
    disagreements = set()
    agreed_referable = set()
    agreed_nonreferable = set()
    for image_id, (regional, algorithm) in pairs.items():
        regional = DMEStatus(regional)
        algorithm = DMEStatus(algorithm)
        if regional != algorithm:
            disagreements.add(image_id)
        elif regional == DMEStatus.REFERABLE:
            agreed_referable.add(image_id)
        else:
            agreed_nonreferable.add(image_id)

    agreed = agreed_referable | agreed_nonreferable
    sample = _uniform_subset(agreed, round(fraction * len(agreed)), seed, "dme_agreed")
    return AdjudicationSelection(
        task=Task.DME,
        disagreement_ids=frozenset(disagreements),
        agreed_referable_sample_ids=frozenset(sample & agreed_referable),
        agreed_nonreferable_sample_ids=frozenset(sample & agreed_nonreferable),
    )
