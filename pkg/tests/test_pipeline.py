import filecmp
import json
from pathlib import Path

import pytest

from screeneval.config import EvalConfig, load_sampling_plan, load_thresholds
from screeneval.errors import IncompleteInputError, ParseError
from screeneval.io import read_grades, read_script
from screeneval.pipeline import (
    Table,
    emit_report,
    run_evaluation,
    simulate_adjudication,
    _render_table,
)
from screeneval.synth import generate_synthetic_cohort, load_cohort_spec


def synth_run(spec_file, tmp_path, seed=21, name="cohort", reference=False):
    spec = load_cohort_spec(spec_file)
    cohort = generate_synthetic_cohort(spec, seed)
    cohort_dir = tmp_path / name
    cohort.write(cohort_dir)
    from screeneval.cli import DEFAULT_CONFIG_BODY

    (cohort_dir / "config.ini").write_text(
        DEFAULT_CONFIG_BODY.format(seed=seed), encoding="utf-8"
    )
    return cohort, cohort_dir


def test_config_loading(agreement_dir):
    config = EvalConfig.load(agreement_dir / "config.ini", output_dir="/tmp/x")
    assert config.thresholds.dr_tail_moderate == 0.5
    assert config.sampling.prevalence == 0.06
    assert config.agreed_fraction == 0.05
    assert config.bin_edges == (0.7,)
    assert config.reference_path is not None
    thresholds = load_thresholds(agreement_dir / "config.ini")
    assert thresholds == config.thresholds
    plan = load_sampling_plan(agreement_dir / "config.ini", default_seed=config.seed)
    assert plan == config.sampling


def test_config_errors(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[inputs]\ngrades = missing.csv\n", encoding="utf-8")
    with pytest.raises(ParseError):
        EvalConfig.load(path, output_dir=tmp_path)

    partial = tmp_path / "partial.ini"
    partial.write_text(
        "[thresholds]\ndr_tail.pdr = 0.5\n", encoding="utf-8"
    )
    with pytest.raises(ParseError):
        load_thresholds(partial)


def test_full_synthetic_run_report_complete(small_spec_file, tmp_path):
    cohort, cohort_dir = synth_run(small_spec_file, tmp_path)
    config = EvalConfig.load(cohort_dir / "config.ini", output_dir=tmp_path / "out")
    report = run_evaluation(config)

    assert report.metrics_overall.rows
    assert report.comparisons.rows
    assert report.metrics_by_region.rows
    assert report.confidence_bins.rows
    assert set(report.confusion_tables) == {
        "dr_grader", "dr_algorithm", "dme_grader", "dme_algorithm",
    }
    assert "dr" in report.gradability_tables
    assert "dr_gradability_adjudication" in report.gradability_tables
    assert report.roc_curves
    assert report.provenance["counts"]["images"] == len(cohort.images)
    # conservation, recomputed here from the report numbers
    counts = report.provenance["counts"]
    assert counts["dr_included"] + counts["dr_excluded"] == counts["images"]
    assert counts["dme_included"] + counts["dme_excluded"] == counts["images"]
    # reference derived through the engine, not supplied
    assert report.provenance["reference_source"] == "adjudicated"
    assert sum(counts["reference_provenance"].values()) > 0


def test_truth_faithful_specialists_reproduce_truth_reference(
    small_spec_file, tmp_path
):
    """With zero-disagreement specialists the derived reference equals ground
    truth, so grader metrics equal a direct truth-based computation."""
    text = small_spec_file.read_text().replace("disagreement_rate = 0.05",
                                               "disagreement_rate = 0.0")
    spec_file = tmp_path / "spec.ini"
    spec_file.write_text(text, encoding="utf-8")
    cohort, cohort_dir = synth_run(spec_file, tmp_path, seed=5)
    config = EvalConfig.load(cohort_dir / "config.ini", output_dir=tmp_path / "out")
    report = run_evaluation(config)

    from screeneval.cascade import DEFAULT_THRESHOLDS, discrete_calls
    from screeneval.model import DRSeverity

    confidences = {v.image_id: v for v in cohort.confidences}
    grades = {r.record.image_id: r.record for r in cohort.grade_rows}
    tp = fn = 0
    for image_id, truth in cohort.truth.items():
        record = grades[image_id]
        gradability, severity, _ = discrete_calls(
            confidences[image_id], DEFAULT_THRESHOLDS
        )
        if not (record.gradability.dr_gradable and gradability.dr_gradable):
            continue
        if truth.dr >= DRSeverity.MODERATE:
            if record.dr >= DRSeverity.MODERATE:
                tp += 1
            else:
                fn += 1
    expected_sens = tp / (tp + fn)
    assert report.metric("moderate_or_worse", "grader", "sensitivity") == pytest.approx(
        expected_sens, abs=1e-12
    )


def test_pipeline_determinism_byte_identical(small_spec_file, tmp_path):
    _, cohort_dir = synth_run(small_spec_file, tmp_path)
    config = EvalConfig.load(cohort_dir / "config.ini")

    out_a, out_b = tmp_path / "run_a", tmp_path / "run_b"
    emit_report(run_evaluation(config), out_a)
    emit_report(run_evaluation(config), out_b)
    names_a = sorted(p.name for p in out_a.iterdir())
    names_b = sorted(p.name for p in out_b.iterdir())
    assert names_a == names_b
    match, mismatch, errors = filecmp.cmpfiles(out_a, out_b, names_a, shallow=False)
    assert mismatch == [] and errors == []


def test_emit_rewrite_identical(small_spec_file, tmp_path):
    _, cohort_dir = synth_run(small_spec_file, tmp_path)
    config = EvalConfig.load(cohort_dir / "config.ini")
    report = run_evaluation(config)
    out = tmp_path / "out"
    first = {p.name: p.read_bytes() for p in emit_report(report, out)}
    second = {p.name: p.read_bytes() for p in emit_report(report, out)}
    assert first == second


def test_empty_table_renders_header_only():
    table = Table(columns=("a", "b"))
    assert _render_table(table) == "a,b\n"


def test_missing_script_rows_abort_with_pending_list(small_spec_file, tmp_path):
    cohort, cohort_dir = synth_run(small_spec_file, tmp_path, name="broken")
    # pick a victim that must be adjudicated: a merged-scale disagreement
    from screeneval.cascade import DEFAULT_THRESHOLDS, discrete_calls
    from screeneval.model import merge_no_mild

    confidences = {v.image_id: v for v in cohort.confidences}
    victim = None
    for row in cohort.grade_rows:
        record = row.record
        if record.dr is None:
            continue
        gradability, severity, _ = discrete_calls(
            confidences[record.image_id], DEFAULT_THRESHOLDS
        )
        if not (record.gradability.dr_gradable and gradability.dr_gradable):
            continue
        if merge_no_mild(record.dr) != merge_no_mild(severity):
            victim = record.image_id
            break
    assert victim is not None
    script_path = cohort_dir / "specialist_script.csv"
    lines = script_path.read_text().splitlines()
    kept = [l for l in lines if not l.startswith(f"{victim},dr,")]
    assert len(kept) < len(lines)
    script_path.write_text("\n".join(kept) + "\n", encoding="utf-8")
    config = EvalConfig.load(cohort_dir / "config.ini", output_dir=tmp_path / "o")
    with pytest.raises(IncompleteInputError) as info:
        run_evaluation(config)
    assert victim in info.value.pending


def test_supplied_reference_must_cover_scored_images(agreement_dir, tmp_path):
    reference = (agreement_dir / "reference.csv").read_text().splitlines()
    clipped = tmp_path / "reference.csv"
    clipped.write_text("\n".join(reference[:-500]) + "\n", encoding="utf-8")
    config_text = (agreement_dir / "config.ini").read_text()
    for name in ("grades", "confidences", "images", "patients"):
        config_text = config_text.replace(
            f"{name} = {name}.csv", f"{name} = {agreement_dir / (name + '.csv')}"
        )
    config_text = config_text.replace("reference = reference.csv",
                                      f"reference = {clipped}")
    config_path = tmp_path / "config.ini"
    config_path.write_text(config_text, encoding="utf-8")
    config = EvalConfig.load(config_path, output_dir=tmp_path / "o")
    with pytest.raises(IncompleteInputError):
        run_evaluation(config)


def test_scripted_panel_deadlock_consumes_senior(small_spec_file, tmp_path):
    cohort, _ = synth_run(small_spec_file, tmp_path, seed=77)
    sim = simulate_adjudication(cohort.grade_rows, cohort.script)
    assert sim.state_counts.get("tie_broken", 0) > 0  # disagreement_rate > 0
    assert sim.state_counts.get("consensus", 0) > 0
    total = sum(sim.state_counts.values())
    assert total == len(sim.engine.sessions)


def test_agreement_fixture_reproduces_published_table(agreement_report):
    report = agreement_report
    oracle = {
        ("moderate_or_worse", "grader", "sensitivity"): 0.740,
        ("moderate_or_worse", "grader", "specificity"): 0.982,
        ("moderate_or_worse", "algorithm", "sensitivity"): 0.970,
        ("moderate_or_worse", "algorithm", "specificity"): 0.957,
        ("severe_or_worse", "grader", "sensitivity"): 0.603,
        ("severe_or_worse", "grader", "specificity"): 0.997,
        ("severe_or_worse", "algorithm", "sensitivity"): 0.927,
        ("severe_or_worse", "algorithm", "specificity"): 0.976,
        ("proliferative", "grader", "sensitivity"): 0.606,
        ("proliferative", "algorithm", "sensitivity"): 0.719,
        ("dme", "grader", "sensitivity"): 0.613,
        ("dme", "grader", "specificity"): 0.992,
        ("dme", "algorithm", "sensitivity"): 0.940,
        ("dme", "algorithm", "specificity"): 0.982,
    }
    for (target, rater, metric), expected in oracle.items():
        assert round(report.metric(target, rater, metric), 3) == expected, (
            target, rater, metric,
        )
    assert report.metric("dr_severity", "grader", "quadratic_weighted_kappa") == (
        pytest.approx(0.776, abs=0.01)
    )
    assert report.metric("dr_severity", "algorithm", "quadratic_weighted_kappa") == (
        pytest.approx(0.846, abs=0.01)
    )
    # the comparisons table flags the published significance
    p_values = {
        (row[0], row[1]): row[5] for row in report.comparisons.rows
    }
    assert p_values[("moderate_or_worse", "sensitivity")] < 0.001
    assert p_values[("moderate_or_worse", "specificity")] < 0.001
    assert p_values[("dr_severity", "quadratic_weighted_kappa")] < 0.001


def test_agreement_fixture_counts_and_sample_size_flag(agreement_report):
    report = agreement_report
    counts = report.provenance["counts"]
    assert counts["images"] == 25326
    assert counts["dr_included"] == 25326
    assert counts["dme_included"] == 24219
    block = report.sample_size
    assert (block["n_core"], block["n_inflated"]) == (6018, 7523)
    assert (block["published_core"], block["published_inflated"]) == (6112, 7450)
    assert block["matches_published"] is False
    assert block["note"]


def test_gradability_sim_fixture(gradability_dir, tmp_path):
    grades = read_grades(gradability_dir / "grades.csv")
    script = read_script(gradability_dir / "script.csv")
    log_path = tmp_path / "events.log"
    sim = simulate_adjudication(grades, script, log_path=log_path)
    rates = sim.agreement["dr_gradability"]
    assert rates["n"] == 982
    assert round(rates["regional"], 3) == 0.285
    assert round(rates["algorithm"], 3) == 0.715
    assert log_path.exists()

    # the log replays to the same state
    from screeneval.adjudication import AdjudicationEngine
    from screeneval.eventlog import EventLog

    replayed = AdjudicationEngine.replay(EventLog.read(log_path))
    assert json.dumps(replayed.state_dict(), sort_keys=True) == json.dumps(
        sim.engine.state_dict(), sort_keys=True
    )


def test_report_json_round_trips(agreement_report, tmp_path):
    out = tmp_path / "emit"
    emit_report(agreement_report, out)
    data = json.loads((out / "report.json").read_text())
    assert data["provenance"]["counts"]["images"] == 25326
    assert Path(out / "roc_moderate_or_worse.csv").exists()
    assert (out / "metrics_overall.csv").read_text().startswith(
        "target,rater,metric,estimate"
    )
