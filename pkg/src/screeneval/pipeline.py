"""End-to-end evaluation: ingest, threshold, reconcile, select, adjudicate,
score, and emit.

The stage order is fixed and recorded in the report provenance. Given the
same inputs and seed, two runs produce byte-identical report directories:
every random choice flows through named substreams, scripted sessions use a
logical clock, and emission renders numbers deterministically.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .adjudication import (
    AdjudicationEngine,
    Provenance,
    ReferenceStandardEntry,
    assemble_reference_standard,
    encode_value,
)
from .cascade import discrete_calls
from .config import EvalConfig
from .errors import DomainError, IncompleteInputError
from .eventlog import EventLog
from .io import Dataset, GradeRow, ScriptLine, ingest, read_script
from .metrics import (
    CIMethod,
    BinaryTarget,
    ConfusionMatrix,
    LabelState,
    MERGED_CATEGORIES,
    MetricResult,
    ScoredImage,
    confidence_bin_analysis,
    confusion_matrix,
    per_region_breakdown,
    quadratic_weighted_kappa,
    roc_auc,
    sensitivity_specificity,
    target_score,
    undefined_metric,
)
from .model import (
    DMEStatus,
    DRSeverity,
    GraderRole,
    MergedSeverity,
    Task,
    grade_value_for_task,
    merge_no_mild,
)
from .resampling import bootstrap_ci, kappa_stat, permutation_test, sensitivity_stat, specificity_stat
from .sampling import (
    AdjudicationSelection,
    estimate_sample_size,
    proportional_sample_sizes,
    select_dme_adjudication,
    select_dr_adjudication,
    select_gradability_adjudication,
)
from .published_counts import PUBLISHED_SAMPLE_SIZE

STAGES = (
    "ingest",
    "threshold_cascade",
    "gradability_reconciliation",
    "adjudication_selection",
    "reference_assembly",
    "metrics",
    "report",
)

PANELS = {
    Task.DR: ("dr_specialist_a", "dr_specialist_b", "dr_senior"),
    Task.DME: ("dme_specialist_a", "dme_specialist_b", "dme_senior"),
    Task.DR_GRADABILITY: ("dr_specialist_a", "dr_specialist_b", "dr_senior"),
    Task.DME_GRADABILITY: ("dme_specialist_a", "dme_specialist_b", "dme_senior"),
}

_ROLE_INDEX = {"specialist_a": 0, "specialist_b": 1, "senior": 2}


# -- scripted adjudication -----------------------------------------------------


class ScriptedPanel:
    """Drives the engine from scripted specialist submissions.

    Script rows for one (image, task, role) apply in order as successive
    rounds; when a grader's rows run out their last value repeats, so a
    two-line disagreement script deadlocks into the senior tie-break.
    """

    def __init__(self, lines):
        self._values: dict[tuple[str, str, str], list] = {}
        for line in lines:
            key = (line.image_id, line.task.value, line.role)
            self._values.setdefault(key, []).append((line.value, line.comment))
        self._cursor: dict[tuple[str, str, str], int] = {}

    def has(self, image_id: str, task: Task) -> bool:
        return all(
            (image_id, task.value, role) in self._values
            for role in ("specialist_a", "specialist_b")
        )

    def _next(self, image_id: str, task: Task, role: str):
        key = (image_id, task.value, role)
        if key not in self._values:
            raise IncompleteInputError(
                f"script has no rows for {role} on ({image_id}, {task.value})",
                [image_id],
            )
        values = self._values[key]
        index = self._cursor.get(key, 0)
        self._cursor[key] = index + 1
        return values[min(index, len(values) - 1)]

    def run_session(
        self,
        engine: AdjudicationEngine,
        image_id: str,
        task: Task,
        context: dict | None = None,
    ):
        a_id, b_id, senior_id = PANELS[task]
        session = engine.open_session(
            image_id, task, a_id, b_id, senior_id, context=context
        )
        role_of = {a_id: "specialist_a", b_id: "specialist_b"}
        steps = 0
        while not session.closed:
            steps += 1
            if steps > 8:
                raise DomainError(f"session {session.session_id} failed to terminate")
            if session.awaiting_tiebreak:
                value, comment = self._next(image_id, task, "senior")
                engine.tiebreak(session.session_id, senior_id, value, comment)
            else:
                for grader_id in sorted(session.awaiting):
                    value, comment = self._next(image_id, task, role_of[grader_id])
                    engine.submit_grade(session.session_id, grader_id, value, comment)
        return session


def run_scripted_sessions(
    script_lines,
    selections: dict[Task, AdjudicationSelection],
    log_path=None,
    contexts: dict | None = None,
) -> AdjudicationEngine:
    """Headless adjudication of every selected image, on a logical clock.

    ``contexts`` may carry a per-(image_id, task) payload recorded on the
    session-open event, e.g. the source calls the service's progress endpoint
    computes agreement rates against.
    """
    engine = AdjudicationEngine(log=EventLog(path=log_path), clock=lambda: "")
    panel = ScriptedPanel(script_lines)
    contexts = contexts or {}
    for task in sorted(selections, key=lambda t: t.value):
        selection = selections[task]
        missing = sorted(i for i in selection.all_ids if not panel.has(i, task))
        if missing:
            raise IncompleteInputError(
                f"{len(missing)} selected images have no specialist script for "
                f"{task.value}",
                missing,
            )
        for image_id in sorted(selection.all_ids):
            panel.run_session(engine, image_id, task, contexts.get((image_id, task)))
    return engine


@dataclass
class SimulationResult:
    engine: AdjudicationEngine
    state_counts: dict
    provenance_counts: dict
    agreement: dict  # task -> {"regional": rate, "algorithm": rate, "n": count}


def agreement_rates(sessions, regional: dict, algorithm: dict, task: Task) -> dict:
    """Share of closed sessions whose final value matches each source."""
    closed = [s for s in sessions if s.closed and s.final_value is not None]
    n = len(closed)
    if n == 0:
        return {"n": 0, "regional": None, "algorithm": None}
    def matches(source):
        hits = 0
        for s in closed:
            call = source.get(s.image_id)
            if call is None:
                continue
            if task == Task.DR:
                call = merge_no_mild(call)
            if call == s.final_value:
                hits += 1
        return hits
    return {
        "n": n,
        "regional": matches(regional) / n,
        "algorithm": matches(algorithm) / n,
    }


def simulate_adjudication(
    grade_rows: list[GradeRow], script_lines: list[ScriptLine], log_path=None
) -> SimulationResult:
    """Replay scripted specialists for every (image, task) in the script and
    report live progress statistics against the recorded source calls."""
    tasks = sorted({line.task for line in script_lines}, key=lambda t: t.value)
    selections = {}
    for task in tasks:
        ids = frozenset(line.image_id for line in script_lines if line.task == task)
        selections[task] = AdjudicationSelection(
            task=task,
            disagreement_ids=ids,
            agreed_referable_sample_ids=frozenset(),
            agreed_nonreferable_sample_ids=frozenset(),
        )

    regional_by_task: dict[Task, dict] = {t: {} for t in tasks}
    algorithm_by_task: dict[Task, dict] = {t: {} for t in tasks}
    for row in grade_rows:
        for task in tasks:
            value = grade_value_for_task(row.record, task)
            if value is None and task in (Task.DR, Task.DME):
                continue
            if row.record.grader_role == GraderRole.REGIONAL_GRADER:
                regional_by_task[task][row.record.image_id] = value
            elif row.record.grader_role == GraderRole.ALGORITHM:
                algorithm_by_task[task][row.record.image_id] = value

    contexts = {}
    for task in tasks:
        for image_id in selections[task].all_ids:
            context = {}
            if image_id in regional_by_task[task]:
                context["regional_value"] = encode_value(
                    task, regional_by_task[task][image_id]
                )
            if image_id in algorithm_by_task[task]:
                context["algorithm_value"] = encode_value(
                    task, algorithm_by_task[task][image_id]
                )
            if context:
                contexts[(image_id, task)] = context
    engine = run_scripted_sessions(
        script_lines, selections, log_path=log_path, contexts=contexts
    )

    state_counts: dict[str, int] = {}
    provenance_counts: dict[str, int] = {}
    for session in engine.sessions.values():
        state_counts[session.status.value] = state_counts.get(session.status.value, 0) + 1
        if session.provenance is not None:
            key = session.provenance.value
            provenance_counts[key] = provenance_counts.get(key, 0) + 1

    agreement = {
        task.value: agreement_rates(
            engine.sessions_for_task(task),
            regional_by_task[task],
            algorithm_by_task[task],
            task,
        )
        for task in tasks
    }
    return SimulationResult(engine, state_counts, provenance_counts, agreement)


# -- report model ---------------------------------------------------------------


@dataclass
class Table:
    columns: tuple
    rows: list = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {"columns": list(self.columns), "rows": [list(r) for r in self.rows]}


@dataclass
class EvalReport:
    cohort_summary: Table
    gradability_tables: dict
    confusion_tables: dict
    metrics_overall: Table
    comparisons: Table
    metrics_by_region: Table
    confidence_bins: Table
    roc_curves: dict
    sample_size: dict
    provenance: dict

    def to_json_dict(self) -> dict:
        return {
            "cohort_summary": self.cohort_summary.to_json_dict(),
            "gradability": {k: t.to_json_dict() for k, t in self.gradability_tables.items()},
            "confusion": {k: t.to_json_dict() for k, t in self.confusion_tables.items()},
            "metrics_overall": self.metrics_overall.to_json_dict(),
            "comparisons": self.comparisons.to_json_dict(),
            "metrics_by_region": self.metrics_by_region.to_json_dict(),
            "confidence_bins": self.confidence_bins.to_json_dict(),
            "roc_curves": {
                name: [[float(f), float(t)] for f, t in curve]
                for name, curve in self.roc_curves.items()
            },
            "sample_size": self.sample_size,
            "provenance": self.provenance,
        }

    def metric(self, target: str, rater: str, name: str) -> float:
        """Look up a pooled estimate from the overall metric table."""
        for row in self.metrics_overall.rows:
            if row[0] == target and row[1] == rater and row[2] == name:
                return row[3]
        raise KeyError((target, rater, name))


# -- evaluation stages -----------------------------------------------------------


def _selection_sizes(config: EvalConfig, n_ref: int, n_non: int) -> tuple[int, int]:
    if config.n_agreed_referable is not None and config.n_agreed_nonreferable is not None:
        return config.n_agreed_referable, config.n_agreed_nonreferable
    return proportional_sample_sizes(n_ref, n_non, config.agreed_fraction)


def run_evaluation(config: EvalConfig) -> EvalReport:
    stage_log = []

    # ingest
    dataset = ingest(
        config.grades_path,
        config.confidences_path,
        config.images_path,
        config.patients_path,
        config.reference_path,
    )
    stage_log.append({"stage": "ingest", "images": len(dataset.images)})

    # threshold cascade
    algo_records: dict[str, tuple] = {
        image_id: discrete_calls(vector, config.thresholds)
        for image_id, vector in dataset.confidences.items()
    }
    stage_log.append({"stage": "threshold_cascade", "images": len(algo_records)})

    # gradability reconciliation
    included: dict[Task, set] = {Task.DR: set(), Task.DME: set()}
    gradability_counts = {
        Task.DR: np.zeros((2, 2), dtype=int),
        Task.DME: np.zeros((2, 2), dtype=int),
    }
    for image_id, record in dataset.regional_grades.items():
        algo_gradability = algo_records[image_id][0]
        for task in (Task.DR, Task.DME):
            g = record.gradability.for_task(task)
            a = algo_gradability.for_task(task)
            gradability_counts[task][0 if g else 1][0 if a else 1] += 1
            if g and a:
                included[task].add(image_id)
    excluded = {t: len(dataset.images) - len(included[t]) for t in included}
    stage_log.append(
        {
            "stage": "gradability_reconciliation",
            "dr_included": len(included[Task.DR]),
            "dr_excluded": excluded[Task.DR],
            "dme_included": len(included[Task.DME]),
            "dme_excluded": excluded[Task.DME],
        }
    )

    # adjudication selection
    dr_pairs = {
        image_id: (
            merge_no_mild(dataset.regional_grades[image_id].dr),
            merge_no_mild(algo_records[image_id][1]),
        )
        for image_id in included[Task.DR]
    }
    n_ref_pop = sum(
        1 for r, a in dr_pairs.values() if r == a and r >= MergedSeverity.MODERATE
    )
    n_non_pop = sum(
        1 for r, a in dr_pairs.values() if r == a and r < MergedSeverity.MODERATE
    )
    n_ref, n_non = _selection_sizes(config, n_ref_pop, n_non_pop)
    dr_selection = select_dr_adjudication(dr_pairs, n_ref, n_non, config.seed)

    dme_pairs = {
        image_id: (dataset.regional_grades[image_id].dme, algo_records[image_id][2])
        for image_id in included[Task.DME]
    }
    dme_selection = select_dme_adjudication(dme_pairs, config.agreed_fraction, config.seed)

    gradability_disagreements = {
        Task.DR_GRADABILITY: frozenset(
            image_id
            for image_id, record in dataset.regional_grades.items()
            if record.gradability.dr_gradable != algo_records[image_id][0].dr_gradable
        ),
        Task.DME_GRADABILITY: frozenset(
            image_id
            for image_id, record in dataset.regional_grades.items()
            if record.gradability.dme_gradable != algo_records[image_id][0].dme_gradable
        ),
    }
    stage_log.append(
        {
            "stage": "adjudication_selection",
            "dr_disagreements": len(dr_selection.disagreement_ids),
            "dr_agreed_sampled": n_ref + n_non,
            "dme_disagreements": len(dme_selection.disagreement_ids),
            "dme_agreed_sampled": len(dme_selection.agreed_referable_sample_ids)
            + len(dme_selection.agreed_nonreferable_sample_ids),
            "dr_gradability_disagreements": len(
                gradability_disagreements[Task.DR_GRADABILITY]
            ),
            "dme_gradability_disagreements": len(
                gradability_disagreements[Task.DME_GRADABILITY]
            ),
        }
    )

    # reference assembly
    reference: dict[tuple[str, Task], ReferenceStandardEntry] = {}
    provenance_counts: dict[str, int] = {p.value: 0 for p in Provenance}
    gradability_sessions: dict[Task, list] = {}
    if config.reference_path is not None:
        reference = dict(dataset.reference or {})
        source = "supplied"
        missing = sorted(
            image_id
            for task in (Task.DR, Task.DME)
            for image_id in included[task]
            if (image_id, task) not in reference
        )
        if missing:
            raise IncompleteInputError(
                f"supplied reference is missing {len(missing)} scored images", missing
            )
    else:
        if config.specialist_script_path is None:
            raise IncompleteInputError(
                "no reference supplied and no specialist script to derive one from"
            )
        script_lines = read_script(config.specialist_script_path)
        panel = ScriptedPanel(script_lines)
        scripted_tasks = {line.task for line in script_lines}
        selections = {Task.DR: dr_selection, Task.DME: dme_selection}
        for task, target_key in (
            (Task.DR_GRADABILITY, Task.DR_GRADABILITY),
            (Task.DME_GRADABILITY, Task.DME_GRADABILITY),
        ):
            if task not in scripted_tasks:
                continue
            disagreements = gradability_disagreements[target_key]
            target = min(1000, len(disagreements))
            selections[task] = AdjudicationSelection(
                task=task,
                disagreement_ids=select_gradability_adjudication(
                    disagreements, target, config.seed
                ),
                agreed_referable_sample_ids=frozenset(),
                agreed_nonreferable_sample_ids=frozenset(),
            )
        engine = run_scripted_sessions(script_lines, selections)
        source = "adjudicated"
        for task, selection in selections.items():
            if task == Task.DR:
                regional = {i: dr_pairs[i][0] for i in included[Task.DR]}
                algorithm = {i: dr_pairs[i][1] for i in included[Task.DR]}
            elif task == Task.DME:
                regional = {i: dme_pairs[i][0] for i in included[Task.DME]}
                algorithm = {i: dme_pairs[i][1] for i in included[Task.DME]}
            else:
                task_attr = (
                    "dr_gradable" if task == Task.DR_GRADABILITY else "dme_gradable"
                )
                regional = {
                    i: getattr(r.gradability, task_attr)
                    for i, r in dataset.regional_grades.items()
                }
                algorithm = {
                    i: getattr(algo_records[i][0], task_attr)
                    for i in dataset.regional_grades
                }
            entries = assemble_reference_standard(
                regional, algorithm, engine.sessions_for_task(task), selection
            )
            for image_id, entry in entries.items():
                reference[(image_id, task)] = entry
            if task in (Task.DR_GRADABILITY, Task.DME_GRADABILITY):
                gradability_sessions[task] = engine.sessions_for_task(task)
    for entry in reference.values():
        provenance_counts[entry.provenance.value] += 1
    stage_log.append(
        {"stage": "reference_assembly", "source": source, "entries": len(reference)}
    )

    # conservation: excluded + scored = ingested, per task
    for task in (Task.DR, Task.DME):
        scored = sum(1 for i in included[task] if (i, task) in reference)
        if scored != len(included[task]) or scored + excluded[task] != len(dataset.images):
            raise IncompleteInputError(
                f"conservation violated for {task.value}: "
                f"{scored} scored + {excluded[task]} excluded != {len(dataset.images)}"
            )

    # metrics
    stage_log.append({"stage": "metrics"})
    scored_images = _build_scored_images(dataset, algo_records, included, reference)
    report = _compute_report(
        config,
        dataset,
        scored_images,
        gradability_counts,
        included,
        excluded,
        dr_selection,
        dme_selection,
        gradability_disagreements,
        gradability_sessions,
        algo_records,
        provenance_counts,
        source,
        stage_log,
    )
    return report


def _build_scored_images(dataset, algo_records, included, reference) -> list[ScoredImage]:
    images = []
    for image_id in sorted(dataset.images):
        record = dataset.regional_grades[image_id]
        _, algo_dr, algo_dme = algo_records[image_id]
        ref_dr = reference.get((image_id, Task.DR))
        ref_dme = reference.get((image_id, Task.DME))
        dr_scored = image_id in included[Task.DR] and ref_dr is not None
        dme_scored = image_id in included[Task.DME] and ref_dme is not None
        if not dr_scored and not dme_scored:
            continue
        images.append(
            ScoredImage(
                image_id=image_id,
                region=dataset.images[image_id].region,
                reference=LabelState(
                    dr=ref_dr.value if dr_scored else None,
                    dme=ref_dme.value if dme_scored else None,
                ),
                grader=LabelState(
                    dr=merge_no_mild(record.dr) if dr_scored else None,
                    dme=record.dme if dme_scored else None,
                ),
                algorithm=LabelState(
                    dr=merge_no_mild(algo_dr) if dr_scored else None,
                    dme=algo_dme if dme_scored else None,
                ),
                confidence=dataset.confidences[image_id],
            )
        )
    return images


def _metric_row(target: str, rater: str, metric: str, result: MetricResult):
    return [
        target,
        rater,
        metric,
        None if math.isnan(result.estimate) else result.estimate,
        result.ci_low,
        result.ci_high,
        result.ci_method.value,
        result.n,
    ]


def _compute_report(
    config,
    dataset,
    scored_images,
    gradability_counts,
    included,
    excluded,
    dr_selection,
    dme_selection,
    gradability_disagreements,
    gradability_sessions,
    algo_records,
    provenance_counts,
    reference_source,
    stage_log,
) -> EvalReport:
    targets = config.targets

    # confusion matrices on the merged scale
    dr_scored = [im for im in scored_images if im.reference.dr is not None]
    dme_scored = [im for im in scored_images if im.reference.dme is not None]
    confusion_tables = {}
    matrices = {}
    for rater in ("grader", "algorithm"):
        pairs = [(im.reference.dr, getattr(im, rater).dr) for im in dr_scored]
        cm = confusion_matrix(pairs, MERGED_CATEGORIES)
        matrices[f"dr_{rater}"] = cm
        confusion_tables[f"dr_{rater}"] = _confusion_table(
            cm, [c.name.lower() for c in MERGED_CATEGORIES]
        )
        dme_cm = confusion_matrix(
            [(im.reference.dme, getattr(im, rater).dme) for im in dme_scored],
            (DMEStatus.ABSENT, DMEStatus.REFERABLE),
        )
        matrices[f"dme_{rater}"] = dme_cm
        confusion_tables[f"dme_{rater}"] = _confusion_table(
            dme_cm, ["absent", "referable"]
        )

    # pooled metrics with intervals
    metrics_overall = Table(
        columns=(
            "target", "rater", "metric", "estimate",
            "ci_low", "ci_high", "ci_method", "n",
        )
    )
    for target in targets:
        scorable = [
            im for im in scored_images
            if _has_labels(im, target)
        ]
        for rater in ("grader", "algorithm"):
            pairs = [(im.reference, getattr(im, rater)) for im in scorable]
            try:
                sens, spec = sensitivity_specificity(pairs, target)
            except Exception:
                sens = undefined_metric(f"sensitivity[{target.name}]", len(pairs))
                spec = undefined_metric(f"specificity[{target.name}]", len(pairs))
            metrics_overall.rows.append(
                _metric_row(target.name, rater, "sensitivity", sens)
            )
            metrics_overall.rows.append(
                _metric_row(target.name, rater, "specificity", spec)
            )

    # kappa with bootstrap interval
    for rater in ("grader", "algorithm"):
        codes = np.array(
            [
                [int(im.reference.dr), int(getattr(im, rater).dr)]
                for im in dr_scored
            ],
            dtype=np.int64,
        )
        stat = kappa_stat(len(MERGED_CATEGORIES))
        estimate = quadratic_weighted_kappa(matrices[f"dr_{rater}"])
        low, high = bootstrap_ci(
            lambda rows: stat(rows[:, 1], rows[:, 0]),
            codes,
            resamples=config.bootstrap_resamples,
            seed=config.seed,
        )
        low, high = min(low, estimate), max(high, estimate)
        metrics_overall.rows.append(
            _metric_row(
                "dr_severity",
                rater,
                "quadratic_weighted_kappa",
                MetricResult(
                    name=f"kappa[{rater}]",
                    estimate=estimate,
                    ci_low=low,
                    ci_high=high,
                    ci_method=CIMethod.BOOTSTRAP_PERCENTILE,
                    n=len(dr_scored),
                ),
            )
        )

    # paired grader-vs-algorithm comparisons
    comparisons = Table(
        columns=("target", "metric", "grader", "algorithm", "difference", "p_value", "n")
    )
    for target in config.permutation_targets:
        scorable = [im for im in scored_images if _has_labels(im, target)]
        ref = np.array([target.is_positive(im.reference) for im in scorable])
        grader = np.array([target.is_positive(im.grader) for im in scorable])
        algo = np.array([target.is_positive(im.algorithm) for im in scorable])
        paired = list(zip(grader.tolist(), algo.tolist(), ref.tolist()))
        for metric_name, stat in (
            ("sensitivity", sensitivity_stat),
            ("specificity", specificity_stat),
        ):
            g_value = stat(grader, ref)
            a_value = stat(algo, ref)
            p = permutation_test(paired, stat, config.permutation_draws, config.seed)
            comparisons.rows.append(
                [
                    target.name, metric_name, g_value, a_value,
                    g_value - a_value, p, len(scorable),
                ]
            )
    if dr_scored:
        stat = kappa_stat(len(MERGED_CATEGORIES))
        ref_codes = np.array([int(im.reference.dr) for im in dr_scored])
        g_codes = np.array([int(im.grader.dr) for im in dr_scored])
        a_codes = np.array([int(im.algorithm.dr) for im in dr_scored])
        paired = list(zip(g_codes.tolist(), a_codes.tolist(), ref_codes.tolist()))
        p = permutation_test(paired, stat, config.permutation_draws, config.seed)
        comparisons.rows.append(
            [
                "dr_severity",
                "quadratic_weighted_kappa",
                stat(g_codes, ref_codes),
                stat(a_codes, ref_codes),
                stat(g_codes, ref_codes) - stat(a_codes, ref_codes),
                p,
                len(dr_scored),
            ]
        )

    # ROC curves
    roc_curves = {}
    for target in targets:
        scorable = [im for im in scored_images if _has_labels(im, target)]
        labels = [target.is_positive(im.reference) for im in scorable]
        if not scorable or len(set(labels)) < 2:
            continue
        scores = [target_score(im.confidence, target) for im in scorable]
        curve, auc = roc_auc(scores, labels)
        roc_curves[target.name] = curve
        metrics_overall.rows.append(
            [
                target.name, "algorithm", "auc", auc,
                None, None, CIMethod.NONE.value, len(scorable),
            ]
        )

    # per-region breakdown
    breakdown = per_region_breakdown(scored_images, targets)
    metrics_by_region = Table(
        columns=(
            "region", "n_images", "cell", "estimate",
            "ci_low", "ci_high", "ci_method", "n",
        )
    )
    for row in breakdown:
        for cell, result in sorted(row.metrics.items()):
            metrics_by_region.rows.append(
                [
                    str(row.region),
                    row.n_images,
                    cell,
                    None if math.isnan(result.estimate) else result.estimate,
                    result.ci_low,
                    result.ci_high,
                    result.ci_method.value,
                    result.n,
                ]
            )

    # confidence bins
    bins = confidence_bin_analysis(scored_images, config.bin_edges, targets)
    confidence_bins = Table(
        columns=(
            "bin_low", "bin_high", "n_images", "cell", "estimate",
            "ci_low", "ci_high", "ci_method", "n",
        )
    )
    for bin_row in bins:
        for cell, result in sorted(bin_row.metrics.items()):
            confidence_bins.rows.append(
                [
                    bin_row.low,
                    bin_row.high,
                    bin_row.n_images,
                    cell,
                    None if math.isnan(result.estimate) else result.estimate,
                    result.ci_low,
                    result.ci_high,
                    result.ci_method.value,
                    result.n,
                ]
            )

    # gradability tables
    gradability_tables = {}
    for task, matrix in gradability_counts.items():
        table = Table(
            columns=("regional_grader", "algorithm_gradable", "algorithm_ungradable")
        )
        table.rows.append(["gradable", int(matrix[0][0]), int(matrix[0][1])])
        table.rows.append(["ungradable", int(matrix[1][0]), int(matrix[1][1])])
        table.rows.append(["included", len(included[task]), None])
        table.rows.append(["excluded", excluded[task], None])
        gradability_tables[task.value] = table
    for task, sessions in gradability_sessions.items():
        attr = "dr_gradable" if task == Task.DR_GRADABILITY else "dme_gradable"
        regional = {
            i: getattr(r.gradability, attr) for i, r in dataset.regional_grades.items()
        }
        algorithm = {
            i: getattr(algo_records[i][0], attr) for i in dataset.regional_grades
        }
        rates = agreement_rates(sessions, regional, algorithm, task)
        # adjudication x source count matrices (gradable first)
        counts = {
            "regional": np.zeros((2, 2), dtype=int),
            "algorithm": np.zeros((2, 2), dtype=int),
        }
        for session in sessions:
            if not session.closed or session.final_value is None:
                continue
            adjudicated = 0 if session.final_value else 1
            for source, calls in (("regional", regional), ("algorithm", algorithm)):
                call = calls.get(session.image_id)
                if call is not None:
                    counts[source][adjudicated][0 if call else 1] += 1
        table = Table(columns=("statistic", "value"))
        table.rows.append(["adjudicated", rates["n"]])
        for source in ("regional", "algorithm"):
            for i, adj_label in enumerate(("gradable", "ungradable")):
                for j, src_label in enumerate(("gradable", "ungradable")):
                    table.rows.append(
                        [
                            f"adjudication_{adj_label}_{source}_{src_label}",
                            int(counts[source][i][j]),
                        ]
                    )
        table.rows.append(["agreement_with_regional", rates["regional"]])
        table.rows.append(["agreement_with_algorithm", rates["algorithm"]])
        gradability_tables[f"{task.value}_adjudication"] = table

    # cohort summary
    cohort_summary = _cohort_summary(dataset)

    # sample size block with the documented deviation flag
    plan = config.sampling
    n_core, n_inflated = estimate_sample_size(plan)
    published_core, published_inflated = PUBLISHED_SAMPLE_SIZE
    sample_size = {
        "plan": {
            "prevalence": plan.prevalence,
            "relative_margin": plan.relative_margin,
            "alpha": plan.alpha,
            "power": plan.power,
            "ungradable_rate": plan.ungradable_rate,
        },
        "n_core": n_core,
        "n_inflated": n_inflated,
        "published_core": published_core,
        "published_inflated": published_inflated,
        "matches_published": (n_core, n_inflated) == (published_core, published_inflated),
        "note": (
            "single-proportion formula with a relative margin; the published "
            "estimate is not reproducible from its stated parameters and is "
            "recorded here for comparison, not as an oracle"
        ),
    }

    provenance = {
        "package_version": __version__,
        "seed": config.seed,
        "config_hash": config.config_hash,
        "reference_source": reference_source,
        "counts": {
            "images": len(dataset.images),
            "patients": len(dataset.patients),
            "dr_included": len(included[Task.DR]),
            "dr_excluded": excluded[Task.DR],
            "dme_included": len(included[Task.DME]),
            "dme_excluded": excluded[Task.DME],
            "dr_disagreements_selected": len(dr_selection.disagreement_ids),
            "dr_agreed_referable_sampled": len(dr_selection.agreed_referable_sample_ids),
            "dr_agreed_nonreferable_sampled": len(
                dr_selection.agreed_nonreferable_sample_ids
            ),
            "dme_disagreements_selected": len(dme_selection.disagreement_ids),
            "dr_gradability_disagreements": len(
                gradability_disagreements[Task.DR_GRADABILITY]
            ),
            "dme_gradability_disagreements": len(
                gradability_disagreements[Task.DME_GRADABILITY]
            ),
            "reference_provenance": provenance_counts,
        },
        "stages": stage_log,
    }

    return EvalReport(
        cohort_summary=cohort_summary,
        gradability_tables=gradability_tables,
        confusion_tables=confusion_tables,
        metrics_overall=metrics_overall,
        comparisons=comparisons,
        metrics_by_region=metrics_by_region,
        confidence_bins=confidence_bins,
        roc_curves=roc_curves,
        sample_size=sample_size,
        provenance=provenance,
    )


def _has_labels(image: ScoredImage, target: BinaryTarget) -> bool:
    states = (image.reference, image.grader, image.algorithm)
    if target.requires_dr and any(s.dr is None for s in states):
        return False
    if target.requires_dme and any(s.dme is None for s in states):
        return False
    return True


def _confusion_table(cm: ConfusionMatrix, labels) -> Table:
    table = Table(columns=tuple(["reference"] + list(labels)))
    for i, row in enumerate(cm.counts):
        table.rows.append([labels[i]] + [int(c) for c in row])
    return table


def _quartiles(values) -> tuple | None:
    present = [v for v in values if v is not None]
    if not present:
        return None
    q25, q50, q75 = np.percentile(present, [25, 50, 75])
    return float(q50), float(q25), float(q75)


def _cohort_summary(dataset: Dataset) -> Table:
    table = Table(
        columns=(
            "region", "patients", "images",
            "pct_no_mild", "pct_moderate", "pct_severe", "pct_proliferative",
            "pct_referable_dme", "pct_female",
            "age_median", "age_q25", "age_q75",
            "hba1c_median", "fbs_median", "ldl_median",
        )
    )
    regions = sorted({p.region for p in dataset.patients.values()})
    for region in ["all"] + regions:
        if region == "all":
            patients = list(dataset.patients.values())
            grades = list(dataset.regional_grades.values())
            images = dataset.images
        else:
            patients = [p for p in dataset.patients.values() if p.region == region]
            image_ids = {i for i, im in dataset.images.items() if im.region == region}
            grades = [dataset.regional_grades[i] for i in sorted(image_ids)]
            images = image_ids
        dr_graded = [g.dr for g in grades if g.dr is not None]
        dme_graded = [g.dme for g in grades if g.dme is not None]
        n_dr = len(dr_graded)

        def pct(predicate, population):
            return 100.0 * sum(1 for v in population if predicate(v)) / len(population) if population else None

        age = _quartiles([p.age for p in patients])
        hba1c = _quartiles([p.hba1c for p in patients])
        fbs = _quartiles([p.fbs for p in patients])
        ldl = _quartiles([p.ldl for p in patients])
        table.rows.append(
            [
                str(region),
                len(patients),
                len(images),
                pct(lambda v: v <= DRSeverity.MILD, dr_graded),
                pct(lambda v: v == DRSeverity.MODERATE, dr_graded),
                pct(lambda v: v == DRSeverity.SEVERE, dr_graded),
                pct(lambda v: v == DRSeverity.PROLIFERATIVE, dr_graded),
                pct(lambda v: v == DMEStatus.REFERABLE, dme_graded),
                pct(lambda p: p.sex.value == "F", patients),
                age[0] if age else None,
                age[1] if age else None,
                age[2] if age else None,
                hba1c[0] if hba1c else None,
                fbs[0] if fbs else None,
                ldl[0] if ldl else None,
            ]
        )
    return table


# -- emission ---------------------------------------------------------------------


def _fmt_cell(value, precision: int = 3) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return f"{value:.{precision}f}"
    return str(value)


# proportions render at 3 decimals like the published tables; p-values keep
# more digits so Monte Carlo floors (1/2001) stay visible
_COLUMN_PRECISION = {"p_value": 5}


def _render_table(table: Table) -> str:
    lines = [",".join(str(c) for c in table.columns)]
    precisions = [_COLUMN_PRECISION.get(str(c), 3) for c in table.columns]
    for row in table.rows:
        lines.append(
            ",".join(_fmt_cell(v, p) for v, p in zip(row, precisions))
        )
    return "\n".join(lines) + "\n"


def _atomic_write(path: Path, content: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as handle:
        handle.write(content)
    os.replace(tmp, path)


def emit_report(report: EvalReport, directory) -> list[Path]:
    """Write the machine-readable report, one CSV per table, and one
    point-series file per ROC curve. Each file lands via write-then-rename so
    a failed run never leaves partial content."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if not os.access(directory, os.W_OK):
        raise OSError(f"output directory {directory} is not writable")

    written = []

    def emit(name: str, content: str):
        path = directory / name
        _atomic_write(path, content)
        written.append(path)

    emit(
        "report.json",
        json.dumps(report.to_json_dict(), sort_keys=True, indent=2) + "\n",
    )
    emit("cohort_summary.csv", _render_table(report.cohort_summary))
    for key, table in sorted(report.gradability_tables.items()):
        emit(f"gradability_{key}.csv", _render_table(table))
    for key, table in sorted(report.confusion_tables.items()):
        emit(f"confusion_{key}.csv", _render_table(table))
    emit("metrics_overall.csv", _render_table(report.metrics_overall))
    emit("comparisons.csv", _render_table(report.comparisons))
    emit("metrics_by_region.csv", _render_table(report.metrics_by_region))
    emit("confidence_bins.csv", _render_table(report.confidence_bins))
    for name, curve in sorted(report.roc_curves.items()):
        lines = ["fpr,tpr"] + [f"{f:.6f},{t:.6f}" for f, t in curve]
        emit(f"roc_{name}.csv", "\n".join(lines) + "\n")
    return written
