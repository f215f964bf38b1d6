"""Recompute the published grader-vs-algorithm comparison from the count
tables and print it next to the published values.

Run from the repository root:

    python scripts/reproduce_published_tables.py
"""

from __future__ import annotations

import sys
from pathlib import Path

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "src"))

from screeneval import published_counts as pc
from screeneval.metrics import (
    MERGED_CATEGORIES,
    ConfusionMatrix,
    dme_pairs_from_counts,
    dr_pairs_from_counts,
    get_target,
    quadratic_weighted_kappa,
    sensitivity_specificity,
)
from screeneval.sampling import SamplingPlan, estimate_sample_size

ROWS = [
    ("moderate_or_worse", "grader", pc.DR_GRADER_COUNTS, (0.740, 0.982)),
    ("moderate_or_worse", "algorithm", pc.DR_ALGORITHM_COUNTS, (0.970, 0.957)),
    ("severe_or_worse", "grader", pc.DR_GRADER_COUNTS, (0.603, 0.997)),
    ("severe_or_worse", "algorithm", pc.DR_ALGORITHM_COUNTS, (0.927, 0.976)),
    ("proliferative", "grader", pc.DR_GRADER_COUNTS, (0.606, 0.998)),
    ("proliferative", "algorithm", pc.DR_ALGORITHM_COUNTS, (0.719, 0.999)),
    ("dme", "grader", pc.DME_GRADER_COUNTS, (0.613, 0.992)),
    ("dme", "algorithm", pc.DME_ALGORITHM_COUNTS, (0.940, 0.982)),
]


def main() -> None:
    print(f"{'target':<22}{'rater':<11}{'sens':>7}{'(pub)':>8}{'spec':>8}{'(pub)':>8}")
    for target_name, rater, counts, (pub_sens, pub_spec) in ROWS:
        pairs = (
            dme_pairs_from_counts(counts)
            if target_name == "dme"
            else dr_pairs_from_counts(counts)
        )
        sens, spec = sensitivity_specificity(pairs, get_target(target_name))
        print(
            f"{target_name:<22}{rater:<11}"
            f"{sens.estimate:>7.3f}{pub_sens:>8.3f}"
            f"{spec.estimate:>8.3f}{pub_spec:>8.3f}"
        )

    print()
    for rater, counts, published in (
        ("grader", pc.DR_GRADER_COUNTS, pc.PUBLISHED_KAPPA_GRADER),
        ("algorithm", pc.DR_ALGORITHM_COUNTS, pc.PUBLISHED_KAPPA_ALGORITHM),
    ):
        kappa = quadratic_weighted_kappa(ConfusionMatrix(MERGED_CATEGORIES, counts))
        print(f"quadratic-weighted kappa [{rater}]: {kappa:.4f} (published {published})")

    plan = SamplingPlan(
        prevalence=0.06, relative_margin=0.10, alpha=0.05, power=0.80,
        ungradable_rate=0.20, seed=0,
    )
    n_core, n_inflated = estimate_sample_size(plan)
    pub_core, pub_inflated = pc.PUBLISHED_SAMPLE_SIZE
    print(
        f"\nsample size: {n_core}/{n_inflated} from the standard formula "
        f"(published {pub_core}/{pub_inflated}; not reproducible from the "
        "stated parameters)"
    )


if __name__ == "__main__":
    main()
