import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from ammflow.cli import main


@pytest.fixture
def runner():
    return CliRunner()


def simulate(runner, tmp_path, *names):
    out = tmp_path / "runs"
    result = runner.invoke(main, ["simulate", *names, "--out", str(out)])
    assert result.exit_code == 0, result.output
    return out


class TestSimulate:
    def test_library_scenario_writes_run_dir(self, runner, tmp_path):
        out = simulate(runner, tmp_path, "relocation_sym_zero_fee")
        run_dir = out / "relocation_sym_zero_fee"
        for name in ("trace.json", "manifest.json", "migration_report.json",
                     "analysis.json", "plan.json", "transfers_TOKA.dot"):
            assert (run_dir / name).is_file(), name
        manifest = json.loads((run_dir / "manifest.json").read_text())
        assert manifest["scenario"] == "relocation_sym_zero_fee"
        assert manifest["numeric_mode"] == "rational"
        assert sorted(manifest["outputs"]) == manifest["outputs"]

    def test_config_file(self, runner, tmp_path):
        config = tmp_path / "s.yaml"
        config.write_text(
            "schema_version: 1\n"
            "scenario: from_config\n"
            "recipe: BenignRouting\n", encoding="utf-8")
        out = simulate(runner, tmp_path, str(config))
        assert (out / "from_config" / "trace.json").is_file()

    def test_peb_trace_initiator_is_executor(self, runner, tmp_path):
        out = simulate(runner, tmp_path, "peb_limit_order")
        trace = json.loads(
            (out / "peb_limit_order" / "trace.json").read_text())
        assert trace["initiator"] == "E"

    def test_malformed_config_exits_2(self, runner, tmp_path):
        config = tmp_path / "bad.yaml"
        config.write_text("schema_version: 99\nscenario: x\nrecipe: y\n",
                          encoding="utf-8")
        result = runner.invoke(main, ["simulate", str(config),
                                      "--out", str(tmp_path / "runs")])
        assert result.exit_code == 2
        assert "schema_version" in result.output

    def test_unknown_name_exits_2(self, runner, tmp_path):
        result = runner.invoke(main, ["simulate", "does_not_exist",
                                      "--out", str(tmp_path / "runs")])
        assert result.exit_code == 2


class TestAnalyze:
    def test_relocation_side_by_side(self, runner, tmp_path):
        out = simulate(runner, tmp_path, "relocation_sym_zero_fee")
        trace = out / "relocation_sym_zero_fee" / "trace.json"
        result = runner.invoke(main, ["analyze", str(trace),
                                      "--principal", "P",
                                      "--beneficiary", "B"])
        assert result.exit_code == 0, result.output
        assert "transfer-layer: NOT RECOVERABLE" in result.output
        assert "MIGRATION P -> B 10 TOKA" in result.output

    def test_direct_transfer_both_recoverable(self, runner, tmp_path):
        out = simulate(runner, tmp_path, "benign_routing")
        trace = out / "benign_routing" / "trace.json"
        result = runner.invoke(main, ["analyze", str(trace),
                                      "--principal", "alice",
                                      "--beneficiary", "carol"])
        assert result.exit_code == 0, result.output
        assert "transfer-layer: RECOVERABLE 25 TOKA" in result.output
        assert "MIGRATION alice -> carol 25 TOKA" in result.output

    def test_missing_file_exits_2(self, runner, tmp_path):
        result = runner.invoke(main, ["analyze",
                                      str(tmp_path / "missing.json"),
                                      "--principal", "P",
                                      "--beneficiary", "B"])
        assert result.exit_code == 2


class TestCalibrate:
    def test_default_observations(self, runner):
        result = runner.invoke(main, ["calibrate"])
        assert result.exit_code == 0, result.output
        assert "relative residual" in result.output
        assert "eta" in result.output

    def test_observation_file(self, runner, tmp_path):
        from ammflow.calibration import PUBLISHED_OBSERVATIONS
        path = tmp_path / "obs.json"
        path.write_text(json.dumps(PUBLISHED_OBSERVATIONS.to_dict()),
                        encoding="utf-8")
        result = runner.invoke(main, ["calibrate", "--observations",
                                      str(path)])
        assert result.exit_code == 0, result.output

    def test_inconsistent_observations_exit_1(self, runner, tmp_path):
        from ammflow.calibration import PUBLISHED_OBSERVATIONS
        data = PUBLISHED_OBSERVATIONS.to_dict()
        data["a_prime"] = 11.0
        path = tmp_path / "obs.json"
        path.write_text(json.dumps(data), encoding="utf-8")
        result = runner.invoke(main, ["calibrate", "--observations",
                                      str(path)])
        assert result.exit_code == 1

    def test_bad_file_exits_2(self, runner, tmp_path):
        path = tmp_path / "obs.json"
        path.write_text("not json", encoding="utf-8")
        result = runner.invoke(main, ["calibrate", "--observations",
                                      str(path)])
        assert result.exit_code == 2


class TestReport:
    def test_aggregates_and_is_deterministic(self, runner, tmp_path):
        out = simulate(runner, tmp_path, "relocation_sym_zero_fee",
                       "benign_routing")
        first = runner.invoke(main, ["report", str(out)])
        assert first.exit_code == 0, first.output
        assert "relocation_sym_zero_fee" in first.output
        report_bytes = (out / "report.json").read_bytes()
        second = runner.invoke(main, ["report", str(out)])
        assert second.exit_code == 0
        assert (out / "report.json").read_bytes() == report_bytes
        payload = json.loads(report_bytes)
        assert "relocation_sym_zero_fee" in payload["runs"]

    def test_empty_dir_exits_2(self, runner, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        result = runner.invoke(main, ["report", str(empty)])
        assert result.exit_code == 2


def test_selftest(runner):
    result = runner.invoke(main, ["selftest"])
    assert result.exit_code == 0, result.output
    assert "all checks passed" in result.output


def test_simulate_rerun_byte_identical(runner, tmp_path):
    out1 = simulate(runner, tmp_path / "a", "relocation_sym_zero_fee")
    out2 = simulate(runner, tmp_path / "b", "relocation_sym_zero_fee")
    for name in ("trace.json", "migration_report.json", "analysis.json",
                 "manifest.json", "plan.json"):
        assert (out1 / "relocation_sym_zero_fee" / name).read_bytes() == \
            (out2 / "relocation_sym_zero_fee" / name).read_bytes()
