import json
import math

import pytest

from fb_phase_space.exceptions import ConfigurationError
from fb_phase_space.simulation.boundary import EPRSetting
from fb_phase_space.simulation.config import EXECUTION_FIELDS
from fb_phase_space.simulation.config import Experiment
from fb_phase_space.simulation.config import ExperimentConfig
from fb_phase_space.simulation.config import StateKind
from fb_phase_space.simulation.config import parse_config
from fb_phase_space.simulation.dynamics import NoiseNormalization
from fb_phase_space.simulation.states import MixtureSpec
from fb_phase_space.simulation.states import SuperpositionSpec
from fb_phase_space.simulation.tests.factories import ExperimentConfigFactory


class TestParseConfig:
    def test_defaults(self):
        config = parse_config()
        assert config.experiment is Experiment.SUPERPOSITION
        assert config.state is StateKind.SUPERPOSITION
        assert config.noise_normalization is NoiseNormalization.VACUUM
        assert config.sources["file"] is None

    def test_flag_aliases(self):
        config = parse_config(overrides={"tf": 2.5, "n": 300, "c2": 0.6, "noise": "printed", "seed": None})
        assert config.t_f == 2.5
        assert config.n_runs == 300
        assert config.c2_mag == 0.6
        assert config.noise_normalization is NoiseNormalization.PRINTED
        assert config.diffusion_constant == pytest.approx(0.25)
        assert config.state_prep().c1 == pytest.approx(0.8)

    def test_flags_override_file(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"experiment": "epr", "r": 1.0, "n": 500}), encoding="utf-8")
        config = parse_config(path, {"r": 1.5})
        assert config.experiment is Experiment.EPR
        assert config.state is StateKind.EPR
        assert config.r == 1.5
        assert config.n_runs == 500
        assert config.sources["file_values"]["r"] == 1.0
        assert config.sources["flag_values"] == {"r": 1.5}

    def test_unknown_option(self):
        with pytest.raises(ConfigurationError, match="unknown flag option"):
            parse_config(overrides={"gain": 2.0})

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match="file not found"):
            parse_config(tmp_path / "missing.json")

    def test_malformed_file(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigurationError, match="not valid JSON"):
            parse_config(path)
        path.write_text("[1, 2]", encoding="utf-8")
        with pytest.raises(ConfigurationError, match="JSON object"):
            parse_config(path)


class TestValidation:
    @pytest.mark.parametrize(
        ("changes", "field"),
        [
            ({"g": 0.0}, "g"),
            ({"t_f": -1.0}, "t_f"),
            ({"n_runs": 0}, "n_runs"),
            ({"seed": 2**64}, "seed"),
            ({"threads": 0}, "threads"),
            ({"diffusion": -0.5}, "diffusion"),
            ({"theta": 2.0 * math.pi}, "theta"),
            ({"readout": "halfway"}, "readout"),
            ({"experiment": "bell", "state": "epr"}, "state"),
            ({"experiment": "epr", "readout": "macroscopic"}, "readout"),
            ({"experiment": "schrodinger", "readout": "macroscopic"}, "readout"),
            ({"experiment": "bell", "readout": "macroscopic"}, "readout"),
            ({"c1": 0.5, "c2_mag": 0.5}, "c1"),
        ],
    )
    def test_offending_field_is_named(self, changes, field):
        with pytest.raises(ConfigurationError) as excinfo:
            ExperimentConfig(**changes)
        assert excinfo.value.field == field

    def test_pair_coherent_state_needs_zeta(self):
        config = ExperimentConfig(experiment=Experiment.BELL)
        with pytest.raises(ConfigurationError):
            config.state_prep()
        assert config.state_prep(zeta=1.2).zeta == 1.2


class TestStatePrep:
    def test_superposition_amplitudes(self):
        prep = ExperimentConfigFactory(c1=0.6).state_prep()
        assert isinstance(prep, SuperpositionSpec)
        assert prep.c2_mag == pytest.approx(0.8)

    def test_mixture_weights_follow_amplitudes(self):
        prep = ExperimentConfigFactory(state=StateKind.MIXTURE, c1=0.6).state_prep()
        assert isinstance(prep, MixtureSpec)
        assert prep.weights == pytest.approx((0.36, 0.64))

    def test_mixture_from_explicit_means(self):
        prep = ExperimentConfigFactory(state="mixture", means=[1.0, 0.0, -1.0]).state_prep()
        assert prep.weights == pytest.approx((1 / 3, 1 / 3, 1 / 3))


class TestDerivedValues:
    def test_grid_uses_steps_per_gain(self, settings):
        settings.SIMULATION_STEPS_PER_GAIN = 50
        assert ExperimentConfigFactory(g=1.0, t_f=2.0).grid().n_steps == 100
        assert ExperimentConfigFactory(dt=0.1, t_f=2.0).grid().n_steps == 20

    def test_stored_runs_capped_by_run_count(self, settings):
        settings.SIMULATION_STORED_RUNS = 10_000
        assert ExperimentConfigFactory(n_runs=50, store_runs=None).stored_runs == 50
        assert ExperimentConfigFactory(n_runs=50, store_runs=100).stored_runs == 50

    def test_threads_fall_back_to_settings(self, settings):
        settings.SIMULATION_DEFAULT_THREADS = 3
        assert ExperimentConfigFactory(threads=None).worker_threads == 3

    def test_output_path_from_settings(self, settings, tmp_path):
        settings.SIMULATION_OUTPUT_DIR = str(tmp_path / "out")
        assert ExperimentConfigFactory().output_path == tmp_path / "out"

    def test_as_dict_is_plain_json(self):
        values = ExperimentConfigFactory(setting=EPRSetting.PP, means=(1.0, -1.0), state="mixture").as_dict()
        assert values["setting"] == "pp"
        assert values["means"] == [1.0, -1.0]
        assert "sources" not in values
        json.dumps(values)

    def test_report_dict_leaves_out_execution_fields(self, settings):
        settings.SIMULATION_RUN_BLOCK_SIZE = 256
        values = ExperimentConfigFactory(threads=4, output_dir="elsewhere", enforce_gates=False).report_dict()
        assert not EXECUTION_FIELDS & set(values)
        assert values["run_block_size"] == 256
        assert values["seed"] == 7

    def test_gates_enforced_by_default(self):
        assert ExperimentConfig().enforce_gates is True
