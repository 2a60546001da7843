import math

import numpy as np
import pytest

from fb_phase_space.exceptions import ConfigurationError
from fb_phase_space.simulation.dynamics import Direction
from fb_phase_space.simulation.dynamics import DriftNoiseSpec
from fb_phase_space.simulation.dynamics import Integrator
from fb_phase_space.simulation.dynamics import NoiseNormalization
from fb_phase_space.simulation.dynamics import TimeGrid
from fb_phase_space.simulation.dynamics import TrajectoryBatch
from fb_phase_space.simulation.dynamics import concatenate_batches
from fb_phase_space.simulation.dynamics import decompose
from fb_phase_space.simulation.dynamics import integrate_backward
from fb_phase_space.simulation.dynamics import integrate_forward
from fb_phase_space.simulation.dynamics import macroscopic_readout_index
from fb_phase_space.simulation.dynamics import propagate
from fb_phase_space.simulation.dynamics import readout


class TestTimeGrid:
    def test_step_divides_interval(self):
        grid = TimeGrid.from_step(3.0, 0.01)
        assert grid.n_steps == 300
        assert grid.dt == pytest.approx(0.01)
        assert grid.times()[-1] == 3.0

    def test_step_never_exceeds_request(self):
        grid = TimeGrid.from_step(1.0, 0.3)
        assert grid.n_steps == 4
        assert grid.dt == 0.25

    def test_default_step_follows_gain(self):
        assert TimeGrid.default_for(2.0, 1.0, steps_per_gain=50).n_steps == 100

    def test_index_of(self):
        grid = TimeGrid(t_end=2.0, n_steps=200)
        assert grid.index_of(0.0) == 0
        assert grid.index_of(1.0) == 100
        assert grid.index_of(2.0) == 200
        with pytest.raises(ConfigurationError):
            grid.index_of(2.5)

    def test_rejects_non_positive_interval(self):
        with pytest.raises(ConfigurationError):
            TimeGrid(t_end=0.0, n_steps=10)


class TestDriftNoiseSpec:
    def test_diffusion_defaults_to_gain_rate(self):
        spec = DriftNoiseSpec(g=2.0, direction="backward")
        assert spec.diffusion == 2.0
        assert spec.stationary_variance == 1.0
        assert spec.direction is Direction.BACKWARD

    def test_printed_normalization_quarters_diffusion(self):
        assert NoiseNormalization.PRINTED.diffusion(2.0) == 0.5
        assert NoiseNormalization.VACUUM.diffusion(2.0) == 2.0

    def test_exact_step_coefficients(self):
        decay, noise_std = DriftNoiseSpec(g=1.0, direction=Direction.FORWARD).step_coefficients(0.1)
        assert decay == pytest.approx(math.exp(-0.1))
        assert noise_std**2 == pytest.approx(1.0 - math.exp(-0.2))

    def test_euler_maruyama_step_coefficients(self):
        spec = DriftNoiseSpec(g=1.0, direction=Direction.FORWARD, diffusion=0.5)
        decay, noise_std = spec.step_coefficients(0.1, Integrator.EULER_MARUYAMA)
        assert decay == pytest.approx(0.9)
        assert noise_std == pytest.approx(math.sqrt(0.1))

    def test_rejects_bad_parameters(self):
        with pytest.raises(ConfigurationError):
            DriftNoiseSpec(g=0.0, direction=Direction.FORWARD)
        with pytest.raises(ConfigurationError):
            DriftNoiseSpec(g=1.0, direction=Direction.FORWARD, diffusion=-1.0)


class TestIntegrators:
    grid = TimeGrid(t_end=3.0, n_steps=150)

    def test_backward_relaxes_to_vacuum_variance(self, rng):
        spec = DriftNoiseSpec(g=1.0, direction=Direction.BACKWARD)
        batch = integrate_backward(np.zeros(20_000), self.grid, spec, rng)
        assert batch.samples.shape == (20_000, 151)
        assert np.all(batch.at(150) == 0.0)
        assert np.var(batch.at(0)) == pytest.approx(1.0 - math.exp(-6.0), rel=0.05)

    def test_backward_mean_decays_toward_early_times(self, rng):
        spec = DriftNoiseSpec(g=1.0, direction=Direction.BACKWARD)
        batch = integrate_backward(np.full(20_000, 5.0), self.grid, spec, rng)
        assert np.mean(batch.at(0)) == pytest.approx(5.0 * math.exp(-3.0), abs=0.05)

    def test_forward_attenuates(self, rng):
        spec = DriftNoiseSpec(g=1.0, direction=Direction.FORWARD, diffusion=0.0)
        batch = integrate_forward(np.array([2.0, -4.0]), self.grid, spec, rng)
        np.testing.assert_allclose(batch.at(150), np.array([2.0, -4.0]) * math.exp(-3.0))

    def test_direction_must_match(self, rng):
        spec = DriftNoiseSpec(g=1.0, direction=Direction.FORWARD)
        with pytest.raises(ConfigurationError):
            integrate_backward(np.zeros(3), self.grid, spec, rng)

    def test_run_ids_are_kept(self, rng):
        spec = DriftNoiseSpec(g=1.0, direction=Direction.FORWARD)
        batch = integrate_forward(np.zeros(3), self.grid, spec, rng, run_ids=[10, 11, 12])
        assert batch[1].run_id == 11
        assert len(batch.head(2)) == 2

    def test_propagate_matches_single_long_step(self, rng):
        spec = DriftNoiseSpec(g=1.0, direction=Direction.FORWARD)
        values = propagate(np.full(20_000, 3.0), spec, 1.0, rng)
        assert np.mean(values) == pytest.approx(3.0 * math.exp(-1.0), abs=0.05)
        assert np.var(values) == pytest.approx(1.0 - math.exp(-2.0), rel=0.05)
        with pytest.raises(ConfigurationError):
            propagate(values, spec, -1.0, rng)


def test_decompose_reassembles_backward_paths(rng):
    grid = TimeGrid(t_end=1.0, n_steps=10)
    spec = DriftNoiseSpec(g=1.0, direction=Direction.BACKWARD)
    means = np.array([2.0, -2.0, 2.0])
    batch = integrate_backward(means, grid, spec, rng)
    parts = decompose(batch, means)
    np.testing.assert_allclose(parts.reassemble(), batch.samples)
    np.testing.assert_allclose(parts.eigen[:, -1], means)
    np.testing.assert_allclose(parts.eigen[:, 0], means * math.exp(-1.0))
    np.testing.assert_allclose(parts.noise[:, -1], 0.0)


def test_readout_divides_by_gain(rng):
    grid = TimeGrid(t_end=1.0, n_steps=10)
    spec = DriftNoiseSpec(g=1.0, direction=Direction.BACKWARD, diffusion=0.0)
    batch = integrate_backward(np.array([math.e]), grid, spec, rng)
    assert readout(batch, 10, 1.0)[0] == pytest.approx(1.0)
    assert readout(batch[0], 5, 1.0) == pytest.approx(1.0)
    with pytest.raises(ConfigurationError):
        readout(batch, 11, 1.0)


class TestMacroscopicReadoutIndex:
    def test_first_index_with_ten_noise_widths(self):
        grid = TimeGrid(t_end=3.0, n_steps=300)
        index = macroscopic_readout_index(grid, 1.0, 0.8, -0.8, 1.0)
        assert index == math.ceil(math.log(10.0 / 1.6) / 0.01)

    def test_none_when_grid_too_short(self):
        grid = TimeGrid(t_end=1.0, n_steps=100)
        assert macroscopic_readout_index(grid, 1.0, 0.8, -0.8, 1.0) is None

    def test_already_macroscopic(self):
        grid = TimeGrid(t_end=1.0, n_steps=100)
        assert macroscopic_readout_index(grid, 1.0, 10.0, -10.0, 1.0) == 0


def test_concatenate_batches_in_order(rng):
    grid = TimeGrid(t_end=1.0, n_steps=4)
    spec = DriftNoiseSpec(g=1.0, direction=Direction.FORWARD)
    first = integrate_forward(np.zeros(2), grid, spec, rng, run_ids=[0, 1])
    second = integrate_forward(np.ones(3), grid, spec, rng, run_ids=[2, 3, 4])
    joined = concatenate_batches([first, second])
    assert joined.run_ids.tolist() == [0, 1, 2, 3, 4]
    assert concatenate_batches([]) is None


def test_batch_shape_is_checked():
    grid = TimeGrid(t_end=1.0, n_steps=4)
    with pytest.raises(ValueError, match="does not match"):
        TrajectoryBatch("x", Direction.FORWARD, grid, np.zeros((2, 4)), np.arange(2), 1.0)
