import math

from factory import Factory
from factory import LazyAttribute

from fb_phase_space.simulation.config import Experiment
from fb_phase_space.simulation.config import ExperimentConfig
from fb_phase_space.simulation.states import EPRSpec
from fb_phase_space.simulation.states import MixtureSpec
from fb_phase_space.simulation.states import PairCoherentSpec
from fb_phase_space.simulation.states import SuperpositionSpec


class SuperpositionSpecFactory(Factory[SuperpositionSpec]):
    """
    The default two-component superposition with x1 = -x2 = 0.8 and r = 2.
    Pass c1 to change the Born weights; c2_mag follows from normalization.
    """

    c1 = math.sqrt(0.5)
    c2_mag = LazyAttribute(lambda o: math.sqrt(max(0.0, 1.0 - o.c1**2)))
    x1 = 0.8
    x2 = -0.8
    r = 2.0

    class Meta:
        model = SuperpositionSpec


class MixtureSpecFactory(Factory[MixtureSpec]):
    weights = (0.5, 0.5)
    means = (0.8, -0.8)
    r = 2.0

    class Meta:
        model = MixtureSpec


class EPRSpecFactory(Factory[EPRSpec]):
    r = 1.0

    class Meta:
        model = EPRSpec


class PairCoherentSpecFactory(Factory[PairCoherentSpec]):
    zeta = 1.2

    class Meta:
        model = PairCoherentSpec


class ExperimentConfigFactory(Factory[ExperimentConfig]):
    """A short superposition run: a few thousand runs on a coarse grid."""

    experiment = Experiment.SUPERPOSITION
    n_runs = 2_000
    t_f = 2.0
    g = 1.0
    seed = 7
    store_runs = 5

    class Meta:
        model = ExperimentConfig
