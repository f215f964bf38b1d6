"""Synthetic screening cohorts with known ground truth.

A cohort spec fixes per-region truth prevalences (DR levels, DME, and a
latent gradable/ungradable state per task), a grader confusion model (ordinal
one-step severity errors plus gradability flips at configurable rates), and
the algorithm's target operating point. Confidence vectors are constructed so
that the shipped threshold cascade reproduces the intended discrete call: the
target level gets a dominant share of the mass, so no higher tail can fire
first. The whole population is a deterministic function of (spec, seed)
through the "synthesis" substream.

Alongside the screening inputs the generator emits a specialist script in
which both specialists grade the ground truth (optionally one deviates for a
configurable share of images, which forces senior tie-breaks), so a full
evaluation run can derive its reference standard through the adjudication
engine instead of being handed one.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, ParseError
from .io import (
    GradeRow,
    ScriptLine,
    write_confidences,
    write_grades,
    write_images,
    write_patients,
    write_script,
)
from .model import (
    ConfidenceVector,
    DMEStatus,
    DRSeverity,
    GradeRecord,
    Gradability,
    GraderRole,
    ImageRecord,
    PatientRecord,
    Sex,
    Task,
    merge_no_mild,
)
from .rng import substream_rng

_LEVEL_KEYS = ("no", "mild", "moderate", "severe", "proliferative")


@dataclass(frozen=True)
class RegionSpec:
    region: int
    n_images: int
    dr_prevalence: tuple[float, float, float, float, float]
    dme_rate: float
    dr_ungradable: float
    dme_ungradable: float
    grader_dr_error: float
    grader_dme_error: float
    grader_dr_gradability_error: float
    grader_dme_gradability_error: float

    def __post_init__(self):
        total = sum(self.dr_prevalence)
        if abs(total - 1.0) > 1e-6:
            raise DomainError(
                f"region {self.region}: DR prevalences sum to {total}, expected 1"
            )
        for name in (
            "dme_rate",
            "dr_ungradable",
            "dme_ungradable",
            "grader_dr_error",
            "grader_dme_error",
            "grader_dr_gradability_error",
            "grader_dme_gradability_error",
        ):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DomainError(f"region {self.region}: {name}={value} outside [0, 1]")


@dataclass(frozen=True)
class AlgorithmSpec:
    dr_sensitivity: float
    dr_specificity: float
    dme_sensitivity: float
    dme_specificity: float
    dr_gradability_error: float
    dme_gradability_error: float


@dataclass(frozen=True)
class CohortSpec:
    regions: tuple[RegionSpec, ...]
    algorithm: AlgorithmSpec
    images_per_patient: int = 4
    specialist_disagreement: float = 0.0
    camera_make: str = "synthcam"
    camera_model: str = "sx-1"
    capture_year: int = 2016


@dataclass(frozen=True)
class ImageTruth:
    """Latent state of one synthetic image."""

    dr: DRSeverity
    dme: DMEStatus
    dr_gradable: bool
    dme_gradable: bool


def _parse_regions_list(raw: str) -> list[int]:
    regions = []
    for token in raw.split(","):
        token = token.strip()
        if "-" in token:
            low, high = token.split("-", 1)
            regions.extend(range(int(low), int(high) + 1))
        elif token:
            regions.append(int(token))
    if not regions:
        raise DomainError("cohort spec names no regions")
    return regions


def load_cohort_spec(path) -> CohortSpec:
    """Parse a cohort spec INI file; [region.N] sections override the [truth]
    and [grader] defaults for that region."""
    path = Path(path)
    if not path.exists():
        raise ParseError(path, None, "spec file does not exist")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ParseError(path, None, f"malformed spec: {exc}") from None

    def section(name, required=True) -> dict:
        if not parser.has_section(name):
            if required:
                raise ParseError(path, None, f"missing [{name}] section")
            return {}
        return dict(parser.items(name))

    cohort = section("cohort")
    truth = section("truth")
    grader = section("grader")
    algorithm = section("algorithm")
    specialists = section("specialists", required=False)

    def get(mapping, key, fallback=None) -> float:
        if key in mapping:
            return float(mapping[key])
        if fallback is None:
            raise ParseError(path, None, f"missing key {key}")
        return fallback

    regions = []
    for region in _parse_regions_list(cohort.get("regions", "1-13")):
        override = section(f"region.{region}", required=False)
        regions.append(
            RegionSpec(
                region=region,
                n_images=int(
                    get(override, "images", float(cohort.get("images_per_region", "2000")))
                ),
                dr_prevalence=tuple(
                    get(override, key, get(truth, key)) for key in _LEVEL_KEYS
                ),
                dme_rate=get(override, "dme", get(truth, "dme")),
                dr_ungradable=get(override, "dr_ungradable", get(truth, "dr_ungradable", 0.0)),
                dme_ungradable=get(
                    override, "dme_ungradable", get(truth, "dme_ungradable", 0.0)
                ),
                grader_dr_error=get(override, "dr_error_rate", get(grader, "dr_error_rate")),
                grader_dme_error=get(override, "dme_error_rate", get(grader, "dme_error_rate")),
                grader_dr_gradability_error=get(
                    override,
                    "dr_gradability_error",
                    get(grader, "dr_gradability_error", 0.0),
                ),
                grader_dme_gradability_error=get(
                    override,
                    "dme_gradability_error",
                    get(grader, "dme_gradability_error", 0.0),
                ),
            )
        )
    algo = AlgorithmSpec(
        dr_sensitivity=get(algorithm, "dr_sensitivity"),
        dr_specificity=get(algorithm, "dr_specificity"),
        dme_sensitivity=get(algorithm, "dme_sensitivity"),
        dme_specificity=get(algorithm, "dme_specificity"),
        dr_gradability_error=get(algorithm, "dr_gradability_error", 0.0),
        dme_gradability_error=get(algorithm, "dme_gradability_error", 0.0),
    )
    return CohortSpec(
        regions=tuple(regions),
        algorithm=algo,
        images_per_patient=int(cohort.get("images_per_patient", "4")),
        specialist_disagreement=float(specialists.get("disagreement_rate", "0.0")),
        camera_make=cohort.get("camera_make", "synthcam"),
        camera_model=cohort.get("camera_model", "sx-1"),
        capture_year=int(cohort.get("capture_year", "2016")),
    )


@dataclass
class SyntheticCohort:
    images: list[ImageRecord]
    patients: list[PatientRecord]
    grade_rows: list[GradeRow]
    confidences: list[ConfidenceVector]
    truth: dict[str, ImageTruth]
    script: list[ScriptLine] = field(default_factory=list)

    def write(self, directory) -> dict[str, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = {
            "grades": directory / "grades.csv",
            "confidences": directory / "confidences.csv",
            "images": directory / "images.csv",
            "patients": directory / "patients.csv",
            "specialist_script": directory / "specialist_script.csv",
            "ground_truth": directory / "ground_truth.csv",
        }
        write_grades(paths["grades"], self.grade_rows)
        write_confidences(paths["confidences"], self.confidences)
        write_images(paths["images"], self.images)
        write_patients(paths["patients"], self.patients)
        write_script(paths["specialist_script"], self.script)
        with open(paths["ground_truth"], "w", encoding="utf-8") as handle:
            handle.write("image_id,dr_severity,dme,dr_gradable,dme_gradable\n")
            for image_id in sorted(self.truth):
                t = self.truth[image_id]
                handle.write(
                    f"{image_id},{int(t.dr)},{int(t.dme)},"
                    f"{int(t.dr_gradable)},{int(t.dme_gradable)}\n"
                )
        return paths


def _ordinal_error(level: DRSeverity, rng) -> DRSeverity:
    step = 1 if rng.random() < 0.5 else -1
    candidate = int(level) + step
    if not 0 <= candidate <= 4:
        candidate = int(level) - step
    return DRSeverity(candidate)


def _confidence_for_level(level: DRSeverity, rng) -> tuple[float, ...]:
    """Score vector whose cascade call (at the shipped thresholds) is exactly
    ``level``: the target holds 55-95% of the mass, so tails above it stay
    below one half while the tail at the target reaches it."""
    weight = rng.uniform(0.55, 0.95)
    others = rng.dirichlet(np.ones(4)) * (1.0 - weight)
    scores = np.empty(5)
    scores[int(level)] = weight
    scores[[i for i in range(5) if i != int(level)]] = others
    return tuple(float(np.clip(s, 0.0, 1.0)) for s in scores)


def _binary_score(positive: bool, rng) -> float:
    return float(rng.uniform(0.55, 0.99)) if positive else float(rng.uniform(0.01, 0.45))


def _flip(value: bool, rate: float, rng) -> bool:
    return (not value) if rng.random() < rate else value


def generate_synthetic_cohort(spec: CohortSpec, seed: int) -> SyntheticCohort:
    """Deterministic population with known truth, grader labels from the
    per-region confusion model, and algorithm confidences whose thresholded
    calls hit the configured operating point in expectation."""
    images: list[ImageRecord] = []
    patients: list[PatientRecord] = []
    grade_rows: list[GradeRow] = []
    confidences: list[ConfidenceVector] = []
    truth: dict[str, ImageTruth] = {}
    script: list[ScriptLine] = []
    algo = spec.algorithm

    for region_spec in spec.regions:
        region = region_spec.region
        rng = substream_rng(seed, "synthesis", region)
        n = region_spec.n_images
        n_patients = max(1, -(-n // spec.images_per_patient))
        for p in range(n_patients):
            patients.append(
                PatientRecord(
                    patient_id=f"r{region:02d}p{p:05d}",
                    region=region,
                    age=float(np.clip(rng.normal(60.0, 11.0), 18.0, 95.0)),
                    sex=Sex.F if rng.random() < 0.675 else Sex.M,
                    hba1c=float(max(rng.normal(7.5, 1.5), 4.0)),
                    fbs=float(max(rng.normal(140.0, 35.0), 50.0)),
                    ldl=float(max(rng.normal(105.0, 30.0), 20.0)),
                )
            )

        levels = rng.choice(5, size=n, p=np.asarray(region_spec.dr_prevalence))
        for i in range(n):
            image_id = f"r{region:02d}i{i:06d}"
            images.append(
                ImageRecord(
                    image_id=image_id,
                    patient_id=f"r{region:02d}p{i // spec.images_per_patient:05d}",
                    region=region,
                    camera_make=spec.camera_make,
                    camera_model=spec.camera_model,
                    capture_year=spec.capture_year,
                )
            )
            true = ImageTruth(
                dr=DRSeverity(int(levels[i])),
                dme=(
                    DMEStatus.REFERABLE
                    if rng.random() < region_spec.dme_rate
                    else DMEStatus.ABSENT
                ),
                dr_gradable=rng.random() >= region_spec.dr_ungradable,
                dme_gradable=rng.random() >= region_spec.dme_ungradable,
            )
            truth[image_id] = true

            # Regional grader: gradability flips, then ordinal severity noise.
            g_dr_gradable = _flip(
                true.dr_gradable, region_spec.grader_dr_gradability_error, rng
            )
            g_dme_gradable = _flip(
                true.dme_gradable, region_spec.grader_dme_gradability_error, rng
            )
            g_dr = None
            if g_dr_gradable:
                g_dr = true.dr
                if rng.random() < region_spec.grader_dr_error:
                    g_dr = _ordinal_error(true.dr, rng)
            g_dme = None
            if g_dme_gradable:
                g_dme = true.dme
                if rng.random() < region_spec.grader_dme_error:
                    g_dme = DMEStatus(1 - int(true.dme))
            grade_rows.append(
                GradeRow(
                    GradeRecord(
                        image_id=image_id,
                        grader_id=f"grader_r{region:02d}",
                        grader_role=GraderRole.REGIONAL_GRADER,
                        gradability=Gradability(g_dr_gradable, g_dme_gradable),
                        dr=g_dr,
                        dme=g_dme,
                    ),
                    region,
                )
            )

            # Algorithm: flip the referable call per the operating point, then
            # pick the severity level the cascade should output.
            referable = true.dr >= DRSeverity.MODERATE
            if referable:
                algo_positive = rng.random() < algo.dr_sensitivity
            else:
                algo_positive = rng.random() >= algo.dr_specificity
            if algo_positive:
                algo_level = true.dr if referable else DRSeverity.MODERATE
            else:
                algo_level = DRSeverity.MILD if referable else true.dr
            dme_positive = (
                rng.random() < algo.dme_sensitivity
                if true.dme == DMEStatus.REFERABLE
                else rng.random() >= algo.dme_specificity
            )
            confidences.append(
                ConfidenceVector(
                    image_id=image_id,
                    dr_scores=_confidence_for_level(algo_level, rng),
                    dme_score=_binary_score(dme_positive, rng),
                    dr_gradability_score=_binary_score(
                        _flip(true.dr_gradable, algo.dr_gradability_error, rng), rng
                    ),
                    dme_gradability_score=_binary_score(
                        _flip(true.dme_gradable, algo.dme_gradability_error, rng), rng
                    ),
                    quality_score=float(rng.uniform(0.5, 1.0)),
                )
            )

            # Specialist script: truth-faithful; an optional scripted
            # deviation by specialist B forces senior tie-breaks.
            deviate = rng.random() < spec.specialist_disagreement
            b_dr = true.dr
            if deviate:
                b_dr = _ordinal_error(true.dr, rng)
                if merge_no_mild(b_dr) == merge_no_mild(true.dr):
                    b_dr = DRSeverity.MODERATE
            b_dme = DMEStatus(1 - int(true.dme)) if deviate else true.dme
            script.append(ScriptLine(image_id, Task.DR, "specialist_a", true.dr))
            script.append(ScriptLine(image_id, Task.DR, "specialist_b", b_dr))
            script.append(ScriptLine(image_id, Task.DR, "senior", true.dr))
            script.append(ScriptLine(image_id, Task.DME, "specialist_a", true.dme))
            script.append(ScriptLine(image_id, Task.DME, "specialist_b", b_dme))
            script.append(ScriptLine(image_id, Task.DME, "senior", true.dme))
            for task, gradable in (
                (Task.DR_GRADABILITY, true.dr_gradable),
                (Task.DME_GRADABILITY, true.dme_gradable),
            ):
                script.append(ScriptLine(image_id, task, "specialist_a", gradable))
                script.append(ScriptLine(image_id, task, "specialist_b", gradable))
                script.append(ScriptLine(image_id, task, "senior", gradable))

    return SyntheticCohort(
        images=images,
        patients=patients,
        grade_rows=grade_rows,
        confidences=confidences,
        truth=truth,
        script=script,
    )
