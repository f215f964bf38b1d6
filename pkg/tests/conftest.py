import pytest
from pathlib import Path

from screeneval.config import EvalConfig
from screeneval.pipeline import run_evaluation

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def agreement_dir() -> Path:
    return DATA / "agreement_fixture"


@pytest.fixture(scope="session")
def gradability_dir() -> Path:
    return DATA / "gradability_fixture"


@pytest.fixture(scope="session")
def agreement_report(agreement_dir, tmp_path_factory):
    """One shared evaluation run over the expanded published-counts fixture."""
    out = tmp_path_factory.mktemp("agreement_report")
    config = EvalConfig.load(agreement_dir / "config.ini", output_dir=out)
    report = run_evaluation(config)
    return report


SYNTH_SPEC = """[cohort]
regions = 1,2
images_per_region = {n}
images_per_patient = 4

[truth]
no = 0.70
mild = 0.1779
moderate = 0.098
severe = 0.0081
proliferative = 0.016
dme = 0.0623
dr_ungradable = 0.06
dme_ungradable = 0.06

[grader]
dr_error_rate = 0.15
dme_error_rate = 0.05
dr_gradability_error = 0.05
dme_gradability_error = 0.05

[algorithm]
dr_sensitivity = 0.97
dr_specificity = 0.96
dme_sensitivity = 0.94
dme_specificity = 0.98
dr_gradability_error = 0.04
dme_gradability_error = 0.04

[specialists]
disagreement_rate = {disagreement}
"""


@pytest.fixture(scope="session")
def small_spec_file(tmp_path_factory) -> Path:
    path = tmp_path_factory.mktemp("spec") / "spec.ini"
    path.write_text(SYNTH_SPEC.format(n=250, disagreement=0.05), encoding="utf-8")
    return path
