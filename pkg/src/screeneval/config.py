"""Run configuration: INI-style key/value file shared by all components.

The [thresholds] section carries the cascade operating points under the keys
dr_tail.pdr, dr_tail.severe, dr_tail.moderate, dr_tail.mild, dme,
gradability.dr and gradability.dme; [sampling] carries the sample-size plan.
Everything random flows from the single [evaluation] seed through named
substreams unless a section pins its own seed explicitly.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass
from pathlib import Path

from .cascade import CascadeThresholds
from .errors import DomainError, ParseError
from .metrics import BinaryTarget, get_target
from .rng import substream_seed
from .sampling import SamplingPlan

THRESHOLD_KEYS = (
    "dr_tail.pdr",
    "dr_tail.severe",
    "dr_tail.moderate",
    "dr_tail.mild",
    "dme",
    "gradability.dr",
    "gradability.dme",
)

DEFAULT_TARGETS = (
    "moderate_or_worse",
    "severe_or_worse",
    "proliferative",
    "dme",
    "severe_or_worse_or_dme",
)
DEFAULT_PERMUTATION_TARGETS = ("moderate_or_worse", "dme")


def _read_ini(path) -> configparser.ConfigParser:
    path = Path(path)
    if not path.exists():
        raise ParseError(path, None, "config file does not exist")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ParseError(path, None, f"malformed config: {exc}") from None
    return parser


def _section(parser, path, name) -> dict:
    if not parser.has_section(name):
        raise ParseError(path, None, f"missing [{name}] section")
    return dict(parser.items(name))


def _unit_float(raw: str, path, key: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise ParseError(path, None, f"{key} must be a number, got {raw!r}") from None
    if not 0.0 <= value <= 1.0:
        raise ParseError(path, None, f"{key}={value} outside [0, 1]")
    return value


def load_thresholds(path) -> CascadeThresholds:
    """Cascade thresholds from the [thresholds] section of a config file."""
    parser = _read_ini(path)
    section = _section(parser, path, "thresholds")
    extra = sorted(set(section) - set(THRESHOLD_KEYS))
    missing = sorted(set(THRESHOLD_KEYS) - set(section))
    if extra or missing:
        raise ParseError(
            path, None,
            f"thresholds section must carry exactly {', '.join(THRESHOLD_KEYS)}"
            + (f"; missing {missing}" if missing else "")
            + (f"; unexpected {extra}" if extra else ""),
        )
    value = {k: _unit_float(section[k], path, k) for k in THRESHOLD_KEYS}
    return CascadeThresholds(
        dr_tail_pdr=value["dr_tail.pdr"],
        dr_tail_severe=value["dr_tail.severe"],
        dr_tail_moderate=value["dr_tail.moderate"],
        dr_tail_mild=value["dr_tail.mild"],
        dme=value["dme"],
        dr_gradability=value["gradability.dr"],
        dme_gradability=value["gradability.dme"],
    )


def load_sampling_plan(path, default_seed: int | None = None) -> SamplingPlan:
    """Sampling plan from the [sampling] section; the seed defaults to the
    'sampling' substream of ``default_seed`` when not pinned in the file."""
    parser = _read_ini(path)
    section = _section(parser, path, "sampling")
    required = ("prevalence", "relative_margin", "alpha", "power", "ungradable_rate")
    missing = sorted(set(required) - set(section))
    if missing:
        raise ParseError(path, None, f"sampling section missing {missing}")
    if "seed" in section:
        seed = int(section["seed"])
    elif default_seed is not None:
        seed = substream_seed(default_seed, "sampling")
    else:
        raise ParseError(path, None, "sampling seed required without a master seed")
    try:
        return SamplingPlan(
            prevalence=float(section["prevalence"]),
            relative_margin=float(section["relative_margin"]),
            alpha=float(section["alpha"]),
            power=float(section["power"]),
            ungradable_rate=float(section["ungradable_rate"]),
            seed=seed,
        )
    except DomainError as exc:
        raise ParseError(path, None, str(exc)) from None


@dataclass(frozen=True)
class EvalConfig:
    """Everything one evaluation run needs; see ``EvalConfig.load``."""

    grades_path: Path
    confidences_path: Path
    images_path: Path
    patients_path: Path
    reference_path: Path | None
    specialist_script_path: Path | None
    thresholds: CascadeThresholds
    sampling: SamplingPlan
    seed: int
    bootstrap_resamples: int
    permutation_draws: int
    bin_edges: tuple[float, ...]
    agreed_fraction: float
    n_agreed_referable: int | None
    n_agreed_nonreferable: int | None
    targets: tuple[BinaryTarget, ...]
    permutation_targets: tuple[BinaryTarget, ...]
    output_dir: Path
    config_hash: str = ""
    source_path: Path | None = None

    @classmethod
    def load(cls, path, output_dir=None) -> "EvalConfig":
        path = Path(path)
        parser = _read_ini(path)
        base = path.parent

        inputs = _section(parser, path, "inputs")
        for key in ("grades", "confidences", "images", "patients"):
            if key not in inputs:
                raise ParseError(path, None, f"[inputs] missing {key}")

        def input_path(key, required=True):
            if key not in inputs or inputs[key] == "":
                if required:
                    raise ParseError(path, None, f"[inputs] missing {key}")
                return None
            candidate = base / inputs[key]
            if not candidate.exists():
                raise ParseError(path, None, f"input file {candidate} does not exist")
            return candidate

        evaluation = _section(parser, path, "evaluation")
        if "seed" not in evaluation:
            raise ParseError(path, None, "[evaluation] missing seed")
        seed = int(evaluation["seed"])

        bin_edges = tuple(
            float(tok)
            for tok in evaluation.get("bin_edges", "0.7").split(",")
            if tok.strip() != ""
        )

        def target_list(key, default):
            names = [
                tok.strip()
                for tok in evaluation.get(key, ",".join(default)).split(",")
                if tok.strip()
            ]
            return tuple(get_target(name) for name in names)

        def optional_int(key):
            raw = evaluation.get(key, "")
            return int(raw) if raw != "" else None

        out = Path(output_dir) if output_dir is not None else None
        if out is None:
            if parser.has_section("output") and parser.has_option("output", "directory"):
                out = base / parser.get("output", "directory")
            else:
                raise ParseError(path, None, "no output directory configured")

        return cls(
            grades_path=input_path("grades"),
            confidences_path=input_path("confidences"),
            images_path=input_path("images"),
            patients_path=input_path("patients"),
            reference_path=input_path("reference", required=False),
            specialist_script_path=input_path("specialist_script", required=False),
            thresholds=load_thresholds(path),
            sampling=load_sampling_plan(path, default_seed=seed),
            seed=seed,
            bootstrap_resamples=int(evaluation.get("bootstrap_resamples", "1000")),
            permutation_draws=int(evaluation.get("permutation_draws", "2000")),
            bin_edges=bin_edges,
            agreed_fraction=float(evaluation.get("agreed_fraction", "0.05")),
            n_agreed_referable=optional_int("n_agreed_referable"),
            n_agreed_nonreferable=optional_int("n_agreed_nonreferable"),
            targets=target_list("targets", DEFAULT_TARGETS),
            permutation_targets=target_list(
                "permutation_targets", DEFAULT_PERMUTATION_TARGETS
            ),
            output_dir=out,
            config_hash=hashlib.sha256(path.read_bytes()).hexdigest(),
            source_path=path,
        )
