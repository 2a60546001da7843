import math

import numpy as np
import pytest
from scipy import integrate
from scipy import stats

from fb_phase_space.exceptions import ConfigurationError
from fb_phase_space.exceptions import RejectionSamplingError
from fb_phase_space.simulation.boundary import BoundaryKind
from fb_phase_space.simulation.boundary import BoundaryModel
from fb_phase_space.simulation.boundary import EPRSetting
from fb_phase_space.simulation.boundary import TimeTag
from fb_phase_space.simulation.boundary import epr_future_model
from fb_phase_space.simulation.boundary import future_x_model
from fb_phase_space.simulation.boundary import sample_conditional_p
from fb_phase_space.simulation.boundary import sample_epr_future
from fb_phase_space.simulation.boundary import sample_future_x
from fb_phase_space.simulation.boundary import sample_initial_p
from fb_phase_space.simulation.states import ConditionalForm
from fb_phase_space.simulation.states import EPRSpec
from fb_phase_space.simulation.states import q_conditional_p_given_x
from fb_phase_space.simulation.states import q_epr_boundary
from fb_phase_space.simulation.states import q_marginal_x_future
from fb_phase_space.simulation.tests.factories import MixtureSpecFactory
from fb_phase_space.simulation.tests.factories import SuperpositionSpecFactory


class TestFutureBoundary:
    def test_model_carries_amplified_marginal(self):
        spec = SuperpositionSpecFactory(c1=0.6)
        model = future_x_model(spec, 1.0, 2.0)
        assert model.kind is BoundaryKind.GAUSSIAN_MIXTURE
        assert model.time_tag is TimeTag.FINAL
        np.testing.assert_allclose(model.means, np.array([0.8, -0.8]) * math.exp(2.0))

    def test_draws_follow_marginal(self, rng):
        spec = SuperpositionSpecFactory(c1=0.6)
        sample = sample_future_x(spec, 1.0, 2.0, 20_000, rng)
        marginal = q_marginal_x_future(spec, 1.0, 2.0)
        assert stats.kstest(sample.values, marginal.cdf).pvalue > 0.001
        assert np.mean(sample.labels == 1) == pytest.approx(0.36, abs=0.02)
        np.testing.assert_allclose(sample.component_means[sample.labels == 2], -0.8 * math.exp(2.0))

    def test_rejects_empty_draw(self, rng):
        with pytest.raises(ConfigurationError):
            sample_future_x(SuperpositionSpecFactory(), 1.0, 2.0, 0, rng)


class TestConditionalP:
    @pytest.mark.parametrize("form", list(ConditionalForm))
    def test_draws_follow_conditional(self, rng, form):
        spec = SuperpositionSpecFactory(r=1.0)
        x = 0.3
        draws = sample_conditional_p(spec, x, 20_000, rng, form=form)
        p = np.linspace(-30.0, 30.0, 6001)
        cdf = integrate.cumulative_trapezoid(q_conditional_p_given_x(spec, p, x, form=form), p, initial=0.0)
        assert stats.kstest(draws, lambda v: np.interp(v, p, cdf)).pvalue > 0.001

    def test_one_conditioning_value_per_draw(self, rng):
        spec = SuperpositionSpecFactory()
        assert sample_conditional_p(spec, np.linspace(-1, 1, 50), None, rng).shape == (50,)
        with pytest.raises(ConfigurationError):
            sample_conditional_p(spec, np.zeros(3), 5, rng)

    def test_gives_up_after_max_tries(self, rng):
        with pytest.raises(RejectionSamplingError):
            sample_conditional_p(SuperpositionSpecFactory(), 0.0, 10, rng, max_tries=0)

    def test_mixture_momentum_ignores_position(self, rng):
        spec = MixtureSpecFactory(r=1.0)
        draws = sample_initial_p(spec, np.full(20_000, 0.8), rng)
        assert np.var(draws) == pytest.approx(spec.sigma_p2, rel=0.05)
        assert np.mean(draws) == pytest.approx(0.0, abs=0.1)


class TestEPRBoundary:
    def test_same_quadrature_model_matches_closed_form(self):
        spec = EPRSpec(r=1.0)
        model = epr_future_model(spec, 1.0, 1.0, EPRSetting.XX)
        np.testing.assert_allclose(model.covariance, q_epr_boundary(spec, 1.0, 1.0, "x").covariance())

    def test_mixed_quadratures_are_uncorrelated(self):
        model = epr_future_model(EPRSpec(r=1.0), 1.0, 1.0, EPRSetting.XP)
        assert model.covariance[0, 1] == 0.0

    @pytest.mark.parametrize(("setting", "quadrature"), [(EPRSetting.XX, "x"), (EPRSetting.PP, "p")])
    def test_sum_and_difference_variances(self, rng, setting, quadrature):
        spec = EPRSpec(r=1.0)
        a, b = sample_epr_future(spec, 1.0, 1.0, setting, 40_000, rng)
        expected = q_epr_boundary(spec, 1.0, 1.0, quadrature)
        assert np.var(a + b) == pytest.approx(expected.sum_variance, rel=0.05)
        assert np.var(a - b) == pytest.approx(expected.difference_variance, rel=0.05)


def test_boundary_model_validation():
    with pytest.raises(ConfigurationError):
        BoundaryModel(BoundaryKind.GAUSSIAN, TimeTag.FINAL, weights=(0.3, 0.3))
    with pytest.raises(ConfigurationError):
        BoundaryModel(BoundaryKind.GAUSSIAN, TimeTag.FINAL, covariance=np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(ConfigurationError):
        BoundaryModel(BoundaryKind.CONDITIONAL_1D, TimeTag.INITIAL, envelope_constant=0.5)
