"""Regenerate the committed regression fixtures from the published counts.

Two fixtures are produced under tests/data/:

  agreement_fixture/   full pipeline inputs expanded from the published
                       (reference x rater) agreement matrices, plus a supplied
                       reference file, a run config, and standalone pairs
                       files for the metrics CLI.
  gradability_fixture/ the sampled DR-gradability disagreement set with the
                       regional and algorithm calls and a specialist script
                       reproducing the adjudicated outcomes.

Everything is deterministic; rerunning this script must be a no-op diff.
"""

from __future__ import annotations

import sys
from pathlib import Path

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "src"))

from screeneval import published_counts as pc
from screeneval.adjudication import Provenance, ReferenceStandardEntry
from screeneval.io import (
    GradeRow,
    PairRow,
    ScriptLine,
    write_grades,
    write_confidences,
    write_images,
    write_patients,
    write_pairs,
    write_reference,
    write_script,
)
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
)

IMAGES_PER_PATIENT = 4

# Representative 5-level severity for each merged category; only the merged
# value matters downstream, the cascade must reproduce it.
MERGED_TO_LEVEL = {
    MergedSeverity.NO_OR_MILD: DRSeverity.NO_DR,
    MergedSeverity.MODERATE: DRSeverity.MODERATE,
    MergedSeverity.SEVERE: DRSeverity.SEVERE,
    MergedSeverity.PROLIFERATIVE: DRSeverity.PROLIFERATIVE,
}

LEVEL_SCORES = {
    DRSeverity.NO_DR: (0.90, 0.025, 0.025, 0.025, 0.025),
    DRSeverity.MODERATE: (0.03, 0.03, 0.88, 0.03, 0.03),
    DRSeverity.SEVERE: (0.03, 0.03, 0.03, 0.88, 0.03),
    DRSeverity.PROLIFERATIVE: (0.03, 0.03, 0.03, 0.03, 0.88),
}

CONFIG_BODY = """[inputs]
grades = grades.csv
confidences = confidences.csv
images = images.csv
patients = patients.csv
reference = reference.csv

[thresholds]
dr_tail.pdr = 0.5
dr_tail.severe = 0.5
dr_tail.moderate = 0.5
dr_tail.mild = 0.5
dme = 0.5
gradability.dr = 0.5
gradability.dme = 0.5

[sampling]
prevalence = 0.06
relative_margin = 0.10
alpha = 0.05
power = 0.80
ungradable_rate = 0.20

[evaluation]
seed = 20190101
bootstrap_resamples = 200
permutation_draws = 2000
bin_edges = 0.7
agreed_fraction = 0.05

[output]
directory = report
"""


def build_agreement_fixture(directory: Path) -> None:
    dr_triples = pc.couple_rater_labels(pc.DR_GRADER_COUNTS, pc.DR_ALGORITHM_COUNTS)
    dme_triples = pc.couple_rater_labels(pc.DME_GRADER_COUNTS, pc.DME_ALGORITHM_COUNTS)
    n_dr = len(dr_triples)
    n_dme = len(dme_triples)
    assert n_dme <= n_dr

    images, patients, grades, confidences, reference = [], [], [], [], []
    pairs_grader, pairs_algorithm = [], []
    for index, (ref_i, grader_i, algo_i) in enumerate(dr_triples):
        image_id = f"i{index + 1:06d}"
        patient_id = f"p{index // IMAGES_PER_PATIENT + 1:05d}"
        dme_scored = index < n_dme
        ref_dr = MergedSeverity(ref_i)
        grader_dr = MergedSeverity(grader_i)
        algo_dr = MergedSeverity(algo_i)
        if dme_scored:
            dme_ref_i, dme_grader_i, dme_algo_i = dme_triples[index]
            ref_dme = DMEStatus(dme_ref_i)
            grader_dme = DMEStatus(dme_grader_i)
            algo_dme = DMEStatus(dme_algo_i)
        else:
            ref_dme = grader_dme = algo_dme = None

        images.append(
            ImageRecord(image_id, patient_id, 1, "synthcam", "sx-1", 2016)
        )
        grades.append(
            GradeRow(
                GradeRecord(
                    image_id=image_id,
                    grader_id="grader_r01",
                    grader_role=GraderRole.REGIONAL_GRADER,
                    gradability=Gradability(True, dme_scored),
                    dr=MERGED_TO_LEVEL[grader_dr],
                    dme=grader_dme,
                ),
                1,
            )
        )
        confidences.append(
            ConfidenceVector(
                image_id=image_id,
                dr_scores=LEVEL_SCORES[MERGED_TO_LEVEL[algo_dr]],
                dme_score=(0.9 if algo_dme == DMEStatus.REFERABLE else 0.1),
                dr_gradability_score=0.9,
                dme_gradability_score=0.9 if dme_scored else 0.1,
                quality_score=0.8,
            )
        )
        agreed_dr = grader_dr == algo_dr == ref_dr
        reference.append(
            ReferenceStandardEntry(
                image_id,
                Task.DR,
                ref_dr,
                Provenance.AGREED_WITHOUT_ADJUDICATION
                if agreed_dr
                else Provenance.ADJUDICATED_CONSENSUS,
            )
        )
        if dme_scored:
            agreed_dme = grader_dme == algo_dme == ref_dme
            reference.append(
                ReferenceStandardEntry(
                    image_id,
                    Task.DME,
                    ref_dme,
                    Provenance.AGREED_WITHOUT_ADJUDICATION
                    if agreed_dme
                    else Provenance.ADJUDICATED_CONSENSUS,
                )
            )
        pairs_grader.append(
            PairRow(image_id, 1, ref_dr, grader_dr, ref_dme, grader_dme)
        )
        pairs_algorithm.append(
            PairRow(image_id, 1, ref_dr, algo_dr, ref_dme, algo_dme)
        )

    n_patients = (n_dr + IMAGES_PER_PATIENT - 1) // IMAGES_PER_PATIENT
    patients = [
        PatientRecord(f"p{k + 1:05d}", 1, 60.0, Sex.F) for k in range(n_patients)
    ]

    write_grades(directory / "grades.csv", grades)
    write_confidences(directory / "confidences.csv", confidences)
    write_images(directory / "images.csv", images)
    write_patients(directory / "patients.csv", patients)
    write_reference(directory / "reference.csv", reference)
    write_pairs(directory / "pairs_grader.csv", pairs_grader)
    write_pairs(directory / "pairs_algorithm.csv", pairs_algorithm)
    (directory / "config.ini").write_text(CONFIG_BODY, encoding="utf-8")
    print(f"agreement fixture: {n_dr} DR-scored, {n_dme} DME-scored images")


def build_gradability_fixture(directory: Path) -> None:
    grades, script = [], []
    index = 0
    for adj_gradable, row in zip((True, False), pc.DR_GRADABILITY_ADJUDICATED):
        for grader_gradable, count in zip((True, False), row):
            for _ in range(count):
                index += 1
                image_id = f"g{index + 1:05d}"
                algo_gradable = not grader_gradable
                grades.append(
                    GradeRow(
                        GradeRecord(
                            image_id=image_id,
                            grader_id="grader_r01",
                            grader_role=GraderRole.REGIONAL_GRADER,
                            gradability=Gradability(grader_gradable, False),
                            dr=DRSeverity.NO_DR if grader_gradable else None,
                            dme=None,
                        ),
                        1,
                    )
                )
                grades.append(
                    GradeRow(
                        GradeRecord(
                            image_id=image_id,
                            grader_id="algorithm",
                            grader_role=GraderRole.ALGORITHM,
                            gradability=Gradability(algo_gradable, False),
                            dr=DRSeverity.NO_DR if algo_gradable else None,
                            dme=None,
                        ),
                        1,
                    )
                )
                for role in ("specialist_a", "specialist_b"):
                    script.append(
                        ScriptLine(image_id, Task.DR_GRADABILITY, role, adj_gradable)
                    )
    write_grades(directory / "grades.csv", grades)
    write_script(directory / "script.csv", script)
    print(f"gradability fixture: {index} adjudicated images")


def main() -> None:
    data = REPO / "tests" / "data"
    agreement = data / "agreement_fixture"
    gradability = data / "gradability_fixture"
    agreement.mkdir(parents=True, exist_ok=True)
    gradability.mkdir(parents=True, exist_ok=True)
    build_agreement_fixture(agreement)
    build_gradability_fixture(gradability)


if __name__ == "__main__":
    main()
