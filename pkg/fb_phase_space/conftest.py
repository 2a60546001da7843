import numpy as np
import pytest

from fb_phase_space.simulation.config import ExperimentConfig
from fb_phase_space.simulation.tests.factories import ExperimentConfigFactory


@pytest.fixture(autouse=True)
def _output_dir(settings, tmp_path) -> None:
    settings.SIMULATION_OUTPUT_DIR = str(tmp_path / "runs")
    settings.ORACLE_REFERENCE_TABLE = tmp_path / "reference_tables.json"


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def small_config() -> ExperimentConfig:
    return ExperimentConfigFactory()
