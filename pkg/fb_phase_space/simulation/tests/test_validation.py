import pytest

from fb_phase_space.exceptions import TruncationError
from fb_phase_space.simulation.validation import VALIDATION_CHECKS
from fb_phase_space.simulation.validation import check_boundary_sampler
from fb_phase_space.simulation.validation import check_chsh_phase_covariance
from fb_phase_space.simulation.validation import check_cutoff_stability
from fb_phase_space.simulation.validation import check_determinism
from fb_phase_space.simulation.validation import check_epr_covariance
from fb_phase_space.simulation.validation import check_evolved_variances
from fb_phase_space.simulation.validation import check_finite_gain_limit
from fb_phase_space.simulation.validation import check_gaussian_q
from fb_phase_space.simulation.validation import check_pair_coherent_q
from fb_phase_space.simulation.validation import check_single_mode_gates
from fb_phase_space.simulation.validation import check_superposition_q
from fb_phase_space.simulation.validation import run_validation


@pytest.mark.parametrize(
    "check",
    [
        check_gaussian_q,
        check_superposition_q,
        check_cutoff_stability,
        check_pair_coherent_q,
        check_epr_covariance,
        check_evolved_variances,
        check_chsh_phase_covariance,
        check_finite_gain_limit,
        check_boundary_sampler,
    ],
)
def test_oracle_checks_pass(check, small_config):
    values, passed = check(small_config)
    assert passed, values


def test_determinism_check(small_config):
    values, passed = check_determinism(small_config)
    assert values == {"repeat_identical": True, "threads_identical": True}
    assert passed


@pytest.mark.slow
def test_single_mode_gates_check(small_config):
    values, passed = check_single_mode_gates(small_config)
    assert passed, values["gates"]


class TestRunValidation:
    def test_one_gate_per_check(self, small_config):
        checks = {"epr_covariance": check_epr_covariance, "evolved_variances": check_evolved_variances}
        report = run_validation(small_config, checks)
        assert report.experiment == "validate"
        assert report.gates == {"epr_covariance": True, "evolved_variances": True}
        assert set(report.statistics) == set(checks)

    def test_raising_check_fails_its_gate(self, small_config):
        def broken(config):
            msg = "cutoff exhausted"
            raise TruncationError(msg)

        report = run_validation(small_config, {"broken": broken})
        assert report.gates == {"broken": False}
        assert report.statistics["broken"] == {"error": "cutoff exhausted"}

    def test_default_battery(self):
        assert set(VALIDATION_CHECKS) >= {"gaussian_q", "determinism", "single_mode_gates"}
