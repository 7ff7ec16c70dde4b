import json

import pandas as pd
import pytest

from app.main import EXIT_CONFIG_ERROR, main
from app.routers.experiment import list_experiments
from app.schemas.config import parse_config, validate_config
from app.schemas.record import ExperimentRecord, FitSummary
from app.services.run_service import (
    EXIT_EXPERIMENT_FAILED,
    EXIT_GATES_FAILED,
    EXIT_OK,
    RECORD_FILE,
    SERIES_FILE,
    SUMMARY_FILE,
    RunService,
)

IDENTITY = """
[experiment]
name = "identity_suite"
seed = 5

[grid]
dim = 2
points_per_axis = 16
band = 3.0

[identity]
trials = 2
pairs = 2

[gates]
deviation_max = 1e-9
"""

SHORT_TRIANGLE = """
[experiment]
name = "scaling_study"
variant = "triangle"

[grid]
dim = 2
points_per_axis = 16

[family]
recipe = "semiclassical"
radius = 2.0

[norm]
N_list = [2, 4]
"""

TOO_FEW_MEMBERS = """
[experiment]
name = "scaling_study"
variant = "main"

[grid]
dim = 2
points_per_axis = 16

[family]
recipe = "semiclassical"
radius = 1.0

[norm]
q = 2.0
N_list = [1, 2, 8]
"""

NARROW_SCHATTEN = """
[experiment]
name = "schatten_study"

[grid]
dim = 2
points_per_axis = 16
band = 5.0

[schatten]
which = "commutator"

[[schatten.u]]
kind = "mode"
modes = [[1, 0]]

[[schatten.u]]
kind = "mode"
modes = [[1, 0]]
amplitude = 2.0
"""


def write_config(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_run_writes_record_series_and_summary(tmp_path):
    result = RunService.run(parse_config(IDENTITY), tmp_path / "out")
    assert result.exit_code == EXIT_OK
    for name in (RECORD_FILE, SERIES_FILE, SUMMARY_FILE):
        assert (tmp_path / "out" / name).is_file()
    record = json.loads((tmp_path / "out" / RECORD_FILE).read_text(encoding="utf-8"))
    assert record["gates"] == {"deviation_max": True}
    assert record["config"]["experiment"]["seed"] == 5
    assert "wall_clock" not in record
    assert set(record["artifacts"]) == {"config_sha256", "series_sha256"}
    series = pd.read_csv(tmp_path / "out" / SERIES_FILE)
    assert list(series.columns) == ["control", "measured", "predictor", "ratio"]
    assert len(series) == 2
    assert "PASS" in (tmp_path / "out" / SUMMARY_FILE).read_text(encoding="utf-8")


def test_rerun_is_byte_identical(tmp_path):
    config = parse_config(IDENTITY)
    RunService.run(config, tmp_path / "a")
    RunService.run(config, tmp_path / "b", jobs=2)
    for name in (RECORD_FILE, SERIES_FILE):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_echoed_config_reproduces_record(tmp_path):
    first = RunService.run(parse_config(IDENTITY), tmp_path / "a")
    echoed = json.loads((tmp_path / "a" / RECORD_FILE).read_text(encoding="utf-8"))["config"]
    second = RunService.run(validate_config(echoed), tmp_path / "b")
    assert second.record.artifacts == first.record.artifacts


def test_missing_exponent_fails_configured_gate(tmp_path):
    ok = RunService.run(parse_config(SHORT_TRIANGLE), tmp_path / "plain")
    assert ok.exit_code == EXIT_OK
    assert ok.record.fit is None
    gated = parse_config(SHORT_TRIANGLE + "\n[gates]\nexponent_max = 1.1\n")
    result = RunService.run(gated, tmp_path / "gated")
    assert result.exit_code == EXIT_GATES_FAILED
    assert result.record.gates == {"exponent_max": False}


def test_schatten_rhs_spread_shortfall_fails_without_explicit_gate(tmp_path):
    result = RunService.run(parse_config(NARROW_SCHATTEN), tmp_path / "narrow")
    assert result.record.metrics["rhs_spread"] == pytest.approx(2.0)
    assert result.record.gates == {"rhs_spread_min": False}
    assert result.exit_code == EXIT_GATES_FAILED


def test_schatten_explicit_rhs_spread_gate_takes_precedence(tmp_path):
    relaxed = parse_config(NARROW_SCHATTEN + "\n[gates]\nrhs_spread_min = 1.5\n")
    result = RunService.run(relaxed, tmp_path / "relaxed")
    assert result.record.gates == {"rhs_spread_min": True}
    assert result.exit_code == EXIT_OK


def test_experiment_failure_still_writes_record(tmp_path):
    result = RunService.run(parse_config(TOO_FEW_MEMBERS), tmp_path / "out")
    assert result.exit_code == EXIT_EXPERIMENT_FAILED
    record = json.loads((tmp_path / "out" / RECORD_FILE).read_text(encoding="utf-8"))
    assert record["status"] == "failed"
    assert record["error"].startswith("FamilyError")
    assert record["passed"] is False


def test_main_runs_config_with_seed_override(tmp_path):
    path = write_config(tmp_path, IDENTITY)
    code = main(["--config", str(path), "--out", str(tmp_path / "out"), "--seed", "9"])
    assert code == EXIT_OK
    record = json.loads((tmp_path / "out" / RECORD_FILE).read_text(encoding="utf-8"))
    assert record["seed"] == 9
    assert record["config"]["experiment"]["seed"] == 9


def test_main_rejects_unknown_experiment(tmp_path):
    path = write_config(tmp_path, IDENTITY.replace("identity_suite", "heat_flow"))
    code = main(["--config", str(path), "--out", str(tmp_path / "out")])
    assert code == EXIT_CONFIG_ERROR
    assert not (tmp_path / "out").exists()


def test_main_lists_experiments(capsys):
    assert main(["--list-experiments"]) == 0
    printed = capsys.readouterr().out
    for name in list_experiments():
        assert name in printed
    assert set(list_experiments()) == {
        "identity_suite", "scaling_study", "schatten_study", "extremizer_search", "spectral_suite",
    }


def write_record(path, **fields):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(ExperimentRecord(**fields).model_dump_json(), encoding="utf-8")


def test_report_on_empty_directory(tmp_path):
    output = RunService.report(tmp_path)
    frame = pd.read_csv(output)
    assert frame.empty
    assert "exponent" in frame.columns
    assert "equivalence_constant" in frame.columns


def test_report_sorts_and_flags(tmp_path):
    fit = FitSummary(exponent=0.5, intercept=0.0, residual=0.01, points=4)
    write_record(tmp_path / "b" / "record.json", experiment="scaling_study", variant="main", dim=3,
                 points_per_axis=16, fit=fit, metrics={"ratio_spread": 1.2})
    write_record(tmp_path / "a" / "record.json", experiment="scaling_study", variant="main", dim=2,
                 points_per_axis=32, fit=fit)
    write_record(tmp_path / "c" / "record.json", experiment="identity_suite", dim=2, points_per_axis=16,
                 metrics={"max_deviation": 1e-14})
    (tmp_path / "broken.json").write_text("{not json", encoding="utf-8")

    frame = pd.read_csv(RunService.report(tmp_path), keep_default_na=False)
    assert list(frame["source"]) == ["c/record.json", "a/record.json", "b/record.json", "broken.json"]
    assert list(frame["flag"]) == ["no_exponent", "", "", "malformed"]
    assert float(frame["exponent"][1]) == 0.5
    assert float(frame["ratio_spread"][2]) == 1.2
