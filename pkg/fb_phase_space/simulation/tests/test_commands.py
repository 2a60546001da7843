from io import StringIO

import pytest
from django.core.management import call_command
from django.core.management.base import CommandError

from fb_phase_space.exceptions import RejectionSamplingError
from fb_phase_space.simulation.experiments import EXPERIMENT_RUNNERS
from fb_phase_space.simulation.reports import ExperimentReport


def _simulate(**options) -> str:
    out = StringIO()
    call_command("simulate", stdout=out, **options)
    return out.getvalue()


class TestSimulateCommand:
    def test_writes_run_files(self, tmp_path):
        output = _simulate(n=600, tf=1.0, seed=3, store_runs=2, output_dir=str(tmp_path / "run"), enforce_gates=False)
        assert "Running superposition with 600 runs (seed 3)" in output
        assert "trajectories.csv" in output
        assert (tmp_path / "run" / "report.json").exists()

    def test_reads_config_file(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text('{"n": 600, "tf": 1.0, "seed": 11, "enforce_gates": false}', encoding="utf-8")
        output = _simulate(config=str(path), seed=12)
        assert "600 runs (seed 12)" in output

    @pytest.mark.parametrize(
        "options",
        [
            {"tf": -1.0},
            {"experiment": "epr", "state": "superposition"},
            {"theta": 7.0},
            {"c1": 0.9, "c2": 0.9},
        ],
    )
    def test_configuration_errors_exit_2(self, options):
        with pytest.raises(CommandError) as excinfo:
            _simulate(**options)
        assert excinfo.value.returncode == 2
        assert "invalid configuration" in str(excinfo.value)

    def test_missing_config_file_exits_2(self, tmp_path):
        with pytest.raises(CommandError) as excinfo:
            _simulate(config=str(tmp_path / "absent.json"))
        assert excinfo.value.returncode == 2

    def test_runtime_errors_exit_3(self, monkeypatch):
        def exhausted(config):
            msg = "envelope too small"
            raise RejectionSamplingError(msg)

        monkeypatch.setitem(EXPERIMENT_RUNNERS, "superposition", exhausted)
        with pytest.raises(CommandError) as excinfo:
            _simulate(n=100)
        assert excinfo.value.returncode == 3

    def test_gate_failure_exits_4_by_default(self, monkeypatch):
        def failing(config):
            return ExperimentReport(experiment="superposition", config=config.report_dict(), gates={"born_rule": False})

        monkeypatch.setitem(EXPERIMENT_RUNNERS, "superposition", failing)
        with pytest.raises(CommandError) as excinfo:
            _simulate(n=100)
        assert excinfo.value.returncode == 4
        assert "born_rule" in str(excinfo.value)
        assert "Gates failed (not enforced): born_rule" in _simulate(n=100, enforce_gates=False)

    def test_macroscopic_readout_rejected_for_epr(self):
        with pytest.raises(CommandError) as excinfo:
            _simulate(experiment="epr", readout="macroscopic")
        assert excinfo.value.returncode == 2
        assert "readout" in str(excinfo.value)

    def test_bell_without_reference_table_exits_3(self, settings, tmp_path):
        settings.ORACLE_REFERENCE_TABLE = tmp_path / "absent.json"
        with pytest.raises(CommandError) as excinfo:
            _simulate(experiment="bell", zeta=1.2, n=100)
        assert excinfo.value.returncode == 3
        assert "build_reference_tables" in str(excinfo.value)
        assert not (tmp_path / "absent.json").exists()
