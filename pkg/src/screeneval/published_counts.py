"""Published agreement counts from the nationwide screening validation.

These count tables are the public record of how the regional graders and the
algorithm compared against the adjudicated reference standard, and of how the
two sources agreed on image gradability. They serve as regression fixtures:
expanding them into per-image pairs and recomputing the statistics must
reproduce the published values.

DR matrices are on the merged 4-category scale (No/Mild, Moderate, Severe,
Proliferative), indexed (reference, rater). Gradability matrices are indexed
(regional grader, algorithm) with gradable first; adjudicated gradability
matrices are indexed (adjudication, regional grader).
"""

from __future__ import annotations

from .model import DMEStatus, MergedSeverity

# reference x regional grader, merged DR scale
DR_GRADER_COUNTS = (
    (21843, 355, 12, 33),
    (729, 1724, 13, 15),
    (17, 79, 100, 8),
    (56, 87, 14, 241),
)

# reference x algorithm, merged DR scale
DR_ALGORITHM_COUNTS = (
    (21288, 902, 38, 15),
    (72, 1866, 525, 18),
    (2, 6, 192, 4),
    (18, 18, 76, 286),
)

# reference x rater, DME absent first
DME_GRADER_COUNTS = ((22182, 168), (723, 1146))
DME_ALGORITHM_COUNTS = ((21951, 399), (112, 1757))

# regional grader x algorithm, gradable first
DR_GRADABILITY_AGREEMENT = ((25348, 1765), (1239, 1591))
DME_GRADABILITY_AGREEMENT = ((24332, 2467), (1036, 2108))

# adjudication x regional grader for the sampled gradability disagreements
DR_GRADABILITY_ADJUDICATED = ((56, 155), (547, 224))
DME_GRADABILITY_ADJUDICATED = ((493, 277), (196, 28))

# Headline values printed alongside the matrices.
PUBLISHED_KAPPA_GRADER = 0.776
PUBLISHED_KAPPA_ALGORITHM = 0.846
PUBLISHED_SAMPLE_SIZE = (6112, 7450)

# Reported headline image counts do not reconcile exactly across the source
# tables; both are recorded and neither is forced onto the other.
REPORTED_TOTAL_IMAGES = 29985
REPORTED_ANALYZED_IMAGES = 29943
REPORTED_GRADABLE_IMAGES = 25326


def dr_scored_total() -> int:
    return sum(sum(row) for row in DR_GRADER_COUNTS)


def dme_scored_total() -> int:
    return sum(sum(row) for row in DME_GRADER_COUNTS)


def couple_rater_labels(counts_a, counts_b) -> list[tuple[int, int, int]]:
    """Expand two matrices sharing reference rows into per-image triples
    (reference, rater_a, rater_b).

    The published tables give only the two (reference, rater) marginals; the
    joint rater-by-rater distribution is unrecorded. Any coupling with the
    right marginals reproduces every published statistic, so labels are paired
    in sorted order within each reference row, deterministically.
    """
    if [sum(r) for r in counts_a] != [sum(r) for r in counts_b]:
        raise ValueError("matrices disagree on reference row totals")
    triples = []
    for ref_idx, (row_a, row_b) in enumerate(zip(counts_a, counts_b)):
        labels_a = [j for j, c in enumerate(row_a) for _ in range(int(c))]
        labels_b = [j for j, c in enumerate(row_b) for _ in range(int(c))]
        triples.extend(
            (ref_idx, a, b) for a, b in zip(sorted(labels_a), sorted(labels_b))
        )
    return triples


def merged_from_index(idx: int) -> MergedSeverity:
    return MergedSeverity(idx)


def dme_from_index(idx: int) -> DMEStatus:
    return DMEStatus(idx)
