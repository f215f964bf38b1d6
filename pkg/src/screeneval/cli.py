"""Command-line entry points.

Exit codes: 0 on success, 2 on validation errors (bad files, bad config,
incomplete inputs), 3 when a requested metric is undefined on the data.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import EvalConfig
from .errors import (
    ContractError,
    DomainError,
    IncompleteInputError,
    IntegrityError,
    ParseError,
    ScreenEvalError,
    UndefinedMetricError,
)
from .io import read_grades, read_pairs, read_script
from .metrics import LabelState, get_target, sensitivity_specificity
from .pipeline import emit_report, run_evaluation, simulate_adjudication
from .synth import generate_synthetic_cohort, load_cohort_spec

VALIDATION_ERRORS = (
    ParseError,
    DomainError,
    IntegrityError,
    ContractError,
    IncompleteInputError,
)

DEFAULT_CONFIG_BODY = """[inputs]
grades = grades.csv
confidences = confidences.csv
images = images.csv
patients = patients.csv
specialist_script = specialist_script.csv

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
seed = {seed}
bootstrap_resamples = 500
permutation_draws = 2000
bin_edges = 0.7
agreed_fraction = 0.05

[output]
directory = report
"""


def _cmd_run(args) -> int:
    config = EvalConfig.load(args.config, output_dir=args.out)
    report = run_evaluation(config)
    written = emit_report(report, config.output_dir)
    print(f"wrote {len(written)} files to {config.output_dir}")
    return 0


def _cmd_synth(args) -> int:
    spec = load_cohort_spec(args.spec)
    cohort = generate_synthetic_cohort(spec, args.seed)
    paths = cohort.write(args.out)
    config_path = Path(args.out) / "config.ini"
    config_path.write_text(DEFAULT_CONFIG_BODY.format(seed=args.seed), encoding="utf-8")
    print(
        f"generated {len(cohort.images)} images / {len(cohort.patients)} patients "
        f"in {args.out}"
    )
    for name, path in sorted(paths.items()):
        print(f"  {name}: {path}")
    print(f"  config: {config_path}")
    return 0


def _cmd_adjudicate_sim(args) -> int:
    grades = read_grades(args.grades)
    script = read_script(args.script)
    result = simulate_adjudication(grades, script, log_path=args.log)
    summary = {
        "sessions": len(result.engine.sessions),
        "states": result.state_counts,
        "provenance": result.provenance_counts,
        "agreement": result.agreement,
    }
    if args.json:
        Path(args.json).write_text(
            json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
    print(f"sessions: {summary['sessions']}")
    for state, count in sorted(result.state_counts.items()):
        print(f"  state {state}: {count}")
    for provenance, count in sorted(result.provenance_counts.items()):
        print(f"  provenance {provenance}: {count}")
    for task, rates in sorted(result.agreement.items()):
        if rates["n"] == 0:
            continue
        print(
            f"  {task}: n={rates['n']} "
            f"agreement regional={rates['regional']:.3f} "
            f"algorithm={rates['algorithm']:.3f}"
        )
    return 0


def _cmd_metrics(args) -> int:
    target = get_target(args.target)
    rows = read_pairs(args.pairs)
    pairs = []
    for row in rows:
        reference = LabelState(dr=row.reference_dr, dme=row.reference_dme)
        predicted = LabelState(dr=row.predicted_dr, dme=row.predicted_dme)
        if target.requires_dr and (reference.dr is None or predicted.dr is None):
            continue
        if target.requires_dme and (reference.dme is None or predicted.dme is None):
            continue
        pairs.append((reference, predicted))
    if not pairs:
        raise UndefinedMetricError(f"no scorable pairs for target {target.name}")
    sens, spec = sensitivity_specificity(pairs, target, level=args.level)
    for result in (sens, spec):
        print(
            f"{result.name}: {result.estimate:.3f} "
            f"[{result.ci_low:.3f}-{result.ci_high:.3f}] n={result.n}"
        )
    if args.json:
        payload = {
            r.name: {
                "estimate": r.estimate,
                "ci_low": r.ci_low,
                "ci_high": r.ci_high,
                "n": r.n,
            }
            for r in (sens, spec)
        }
        Path(args.json).write_text(
            json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
    return 0


def _cmd_serve(args) -> int:
    from . import service

    forwarded = ["--host", args.host, "--port", str(args.port), "--log", args.log]
    if args.registry:
        forwarded += ["--registry", args.registry]
    if args.senior_blind:
        forwarded += ["--senior-blind"]
    return service.main(forwarded)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eval",
        description="Reference-standard adjudication and evaluation for DR screening",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a full evaluation from a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None, help="override the output directory")
    p_run.set_defaults(fn=_cmd_run)

    p_synth = sub.add_parser("synth", help="generate a synthetic cohort")
    p_synth.add_argument("--spec", required=True)
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--seed", type=int, required=True)
    p_synth.set_defaults(fn=_cmd_synth)

    p_sim = sub.add_parser(
        "adjudicate-sim", help="replay scripted specialists through the engine"
    )
    p_sim.add_argument("--grades", required=True)
    p_sim.add_argument("--script", required=True)
    p_sim.add_argument("--log", default=None, help="write the event log here")
    p_sim.add_argument("--json", default=None, help="write a JSON summary here")
    p_sim.set_defaults(fn=_cmd_adjudicate_sim)

    p_metrics = sub.add_parser("metrics", help="sensitivity/specificity from a pairs file")
    p_metrics.add_argument("--pairs", required=True)
    p_metrics.add_argument("--target", required=True)
    p_metrics.add_argument("--level", type=float, default=0.95)
    p_metrics.add_argument("--json", default=None)
    p_metrics.set_defaults(fn=_cmd_metrics)

    p_serve = sub.add_parser("serve", help="run the grading service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8700)
    p_serve.add_argument("--log", default="adjudication.log")
    p_serve.add_argument("--registry", default=None)
    p_serve.add_argument("--senior-blind", action="store_true")
    p_serve.set_defaults(fn=_cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except UndefinedMetricError as exc:
        print(f"undefined metric: {exc}", file=sys.stderr)
        return 3
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc, IncompleteInputError) and exc.pending:
            preview = ", ".join(exc.pending[:20])
            more = "" if len(exc.pending) <= 20 else f" (+{len(exc.pending) - 20} more)"
            print(f"pending: {preview}{more}", file=sys.stderr)
        return 2
    except ScreenEvalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
