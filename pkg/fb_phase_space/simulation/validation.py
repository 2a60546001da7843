"""
Validation battery: oracle cross-checks of the closed forms, reproducibility
of the engine, and the statistical gates of a short single-mode run.

Each check returns its measured values and a pass flag; the battery result is
an ``ExperimentReport`` with one gate per check.
"""

from __future__ import annotations

import json
import logging
import math
from collections.abc import Callable
from dataclasses import replace

import numpy as np
from django.conf import settings

from fb_phase_space.exceptions import PhaseSpaceError
from fb_phase_space.oracle.bell import CHSHAngles
from fb_phase_space.oracle.bell import chsh_reference
from fb_phase_space.oracle.bell import phase_shift_pairs
from fb_phase_space.oracle.bell import sign_correlation
from fb_phase_space.oracle.fock import build_state
from fb_phase_space.oracle.fock import evolve
from fb_phase_space.oracle.fock import q_eval
from fb_phase_space.oracle.fock import quadrature_covariance
from fb_phase_space.oracle.fock import quadrature_moments
from fb_phase_space.simulation.boundary import sample_future_x
from fb_phase_space.simulation.config import Experiment
from fb_phase_space.simulation.config import ExperimentConfig
from fb_phase_space.simulation.config import StateKind
from fb_phase_space.simulation.experiments import run_single_mode
from fb_phase_space.simulation.reports import ExperimentReport
from fb_phase_space.simulation.states import EPRSpec
from fb_phase_space.simulation.states import PairCoherentSpec
from fb_phase_space.simulation.states import PhasePoint
from fb_phase_space.simulation.states import SuperpositionSpec
from fb_phase_space.simulation.states import evolved_variances
from fb_phase_space.simulation.states import q_epr
from fb_phase_space.simulation.states import q_marginal_x_future
from fb_phase_space.simulation.states import q_pair_coherent
from fb_phase_space.simulation.states import q_superposition
from fb_phase_space.simulation.stats import ks_test
from fb_phase_space.simulation.streams import Stream
from fb_phase_space.simulation.streams import stream_generator

logger = logging.getLogger(__name__)

ORACLE_TOLERANCE = 1e-8
VARIANCE_TOLERANCE = 1e-6
FINITE_GAIN_TOLERANCE = 1e-3
# Moderate squeezing keeps the Fock cutoffs of the oracle checks small.
CHECK_SQUEEZING = 1.0
CHECK_ZETA = 1.2
CHECK_RUNS = 20_000

CheckResult = tuple[dict, bool]


def _single_mode_points() -> PhasePoint:
    x, p = np.meshgrid(np.linspace(-4.0, 4.0, 9), np.linspace(-6.0, 6.0, 9), indexing="ij")
    return PhasePoint.single(x.ravel(), p.ravel())


def _two_mode_points(rng: np.random.Generator, n: int = 64) -> PhasePoint:
    x_a, p_a, x_b, p_b = rng.uniform(-3.0, 3.0, size=(4, n))
    return PhasePoint(x_a=x_a, p_a=p_a, x_b=x_b, p_b=p_b)


def _max_difference(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def check_gaussian_q(config: ExperimentConfig) -> CheckResult:
    """Closed-form Q of a single squeezed component and of the EPR state against the Fock oracle."""
    component = SuperpositionSpec(c1=1.0, c2_mag=0.0, x1=0.8, x2=-0.8, r=CHECK_SQUEEZING)
    pt = _single_mode_points()
    single = _max_difference(q_superposition(component, pt), q_eval(build_state(component), pt, measure="quadrature"))
    epr = EPRSpec(r=CHECK_SQUEEZING)
    pt2 = _two_mode_points(np.random.default_rng(1))
    two = _max_difference(q_epr(epr, pt2), q_eval(build_state(epr), pt2))
    values = {"single_mode_max_difference": single, "epr_max_difference": two, "tolerance": ORACLE_TOLERANCE}
    return values, max(single, two) <= ORACLE_TOLERANCE


def check_superposition_q(config: ExperimentConfig) -> CheckResult:
    """Two-component Q, at t_1 and after amplification, against the oracle state and its evolution."""
    spec = SuperpositionSpec(c1=math.sqrt(0.36), c2_mag=0.8, x1=0.8, x2=-0.8, r=CHECK_SQUEEZING)
    pt = _single_mode_points()
    state = build_state(spec)
    initial = _max_difference(q_superposition(spec, pt), q_eval(state, pt, measure="quadrature"))
    duration = 0.5
    evolved = _max_difference(
        q_superposition(spec, pt, g=1.0, t=duration),
        q_eval(evolve(state, 1.0, duration), pt, measure="quadrature"),
    )
    values = {"initial_max_difference": initial, "evolved_max_difference": evolved, "tolerance": ORACLE_TOLERANCE}
    return values, max(initial, evolved) <= ORACLE_TOLERANCE


def check_cutoff_stability(config: ExperimentConfig) -> CheckResult:
    """Q must not move when the automatically chosen cutoff is doubled."""
    spec = SuperpositionSpec(r=CHECK_SQUEEZING)
    state = build_state(spec)
    doubled = build_state(spec, cutoff=2 * state.cutoff)
    pt = _single_mode_points()
    difference = _max_difference(q_eval(state, pt), q_eval(doubled, pt))
    values = {"cutoff": state.cutoff, "max_difference": difference, "tolerance": ORACLE_TOLERANCE}
    return values, difference <= ORACLE_TOLERANCE


def check_pair_coherent_q(config: ExperimentConfig) -> CheckResult:
    spec = PairCoherentSpec(zeta=CHECK_ZETA)
    pt = _two_mode_points(np.random.default_rng(2))
    difference = _max_difference(q_pair_coherent(spec, pt), q_eval(build_state(spec), pt))
    return {"max_difference": difference, "tolerance": ORACLE_TOLERANCE}, difference <= ORACLE_TOLERANCE


def check_epr_covariance(config: ExperimentConfig) -> CheckResult:
    """Born Var(x_A - x_B) = 2 e^{-2r} and Var(p_A + p_B) = 2 e^{-2r} from Fock moments."""
    spec = EPRSpec(r=CHECK_SQUEEZING)
    state = build_state(spec)
    x = quadrature_covariance(state, 0.0, 0.0)
    p = quadrature_covariance(state, math.pi / 2.0, math.pi / 2.0)
    expected = 2.0 * math.exp(-2.0 * spec.r)
    variance_x = float(x[0, 0] + x[1, 1] - 2.0 * x[0, 1])
    variance_p = float(p[0, 0] + p[1, 1] + 2.0 * p[0, 1])
    difference = max(abs(variance_x - expected), abs(variance_p - expected))
    values = {"variance_x": variance_x, "variance_p": variance_p, "expected": expected}
    return values, difference <= VARIANCE_TOLERANCE


def check_evolved_variances(config: ExperimentConfig) -> CheckResult:
    """Amplified x variance and attenuated p variance of a squeezed component against oracle moments."""
    spec = SuperpositionSpec(c1=1.0, c2_mag=0.0, r=CHECK_SQUEEZING)
    duration = 0.5
    state = evolve(build_state(spec), 1.0, duration)
    _, born_x = quadrature_moments(state, 0.0)
    _, born_p = quadrature_moments(state, math.pi / 2.0)
    # Husimi variances carry one extra unit of vacuum noise over the Born ones.
    sx2, sp2 = evolved_variances(spec.r, 1.0, duration)
    difference = max(abs(born_x + 1.0 - sx2), abs(born_p + 1.0 - sp2))
    values = {"born_x": born_x, "born_p": born_p, "husimi_x": sx2, "husimi_p": sp2}
    return values, difference <= VARIANCE_TOLERANCE


def check_chsh_phase_covariance(config: ExperimentConfig) -> CheckResult:
    """Pair-coherent correlators depend only on theta + phi."""
    state = build_state(PairCoherentSpec(zeta=CHECK_ZETA))
    pairs = phase_shift_pairs(0.3, 1.1, (0.4, 1.7, 2.9))
    values = [sign_correlation(state, theta, phi) for theta, phi in pairs]
    spread = max(values) - min(values)
    return {"correlators": values, "spread": spread}, spread <= ORACLE_TOLERANCE


def check_finite_gain_limit(config: ExperimentConfig) -> CheckResult:
    """The finite-gain CHSH reference tends to the ideal one as G grows."""
    spec = PairCoherentSpec(zeta=CHECK_ZETA)
    angles = CHSHAngles(0.0, math.pi / 2.0, math.pi / 4.0, 3.0 * math.pi / 4.0)
    ideal = chsh_reference(spec, angles).s_value
    large = chsh_reference(spec, angles, gain=1e4).s_value
    small = chsh_reference(spec, angles, gain=2.0).s_value
    values = {"ideal": ideal, "gain_1e4": large, "gain_2": small}
    return values, abs(large - ideal) <= FINITE_GAIN_TOLERANCE


def check_boundary_sampler(config: ExperimentConfig) -> CheckResult:
    """Future-boundary draws against the amplified x-marginal, by one-sample KS."""
    spec = SuperpositionSpec()
    rng = stream_generator(config.seed, 0, Stream.BOUNDARY, variant=99)
    sample = sample_future_x(spec, 1.0, 2.0, CHECK_RUNS, rng)
    result = ks_test(sample.values, q_marginal_x_future(spec, 1.0, 2.0).cdf)
    alpha = getattr(settings, "SIMULATION_SIGNIFICANCE", 0.01)
    return {"statistic": result.statistic, "p_value": result.p_value}, result.p_value > alpha


def _small_config(config: ExperimentConfig, **changes) -> ExperimentConfig:
    base = {
        "experiment": Experiment.SUPERPOSITION,
        "state": StateKind.SUPERPOSITION,
        "n_runs": min(config.n_runs, CHECK_RUNS),
        "t_f": 2.0,
        "store_runs": 0,
        "validate": False,
        "enforce_gates": False,
    }
    return replace(config, **{**base, **changes})


def _results_of(report: ExperimentReport) -> str:
    values = report.as_dict()
    return json.dumps({key: values[key] for key in ("statistics", "gates", "histograms")}, sort_keys=True)


def check_determinism(config: ExperimentConfig) -> CheckResult:
    """Identical seeds give identical results, whatever the thread count."""
    small = _small_config(config, n_runs=min(config.n_runs, 2_000))
    first = _results_of(run_single_mode(replace(small, threads=1)))
    second = _results_of(run_single_mode(replace(small, threads=1)))
    threaded = _results_of(run_single_mode(replace(small, threads=3)))
    values = {"repeat_identical": first == second, "threads_identical": first == threaded}
    return values, first == second == threaded


def check_single_mode_gates(config: ExperimentConfig) -> CheckResult:
    """Born rule, hidden vacuum and mixture equivalence on a short run."""
    report = run_single_mode(_small_config(config))
    values = {"gates": report.gates, "born_table": report.statistics["born_table"]}
    return values, report.passed


VALIDATION_CHECKS: dict[str, Callable[[ExperimentConfig], CheckResult]] = {
    "gaussian_q": check_gaussian_q,
    "superposition_q": check_superposition_q,
    "cutoff_stability": check_cutoff_stability,
    "pair_coherent_q": check_pair_coherent_q,
    "epr_covariance": check_epr_covariance,
    "evolved_variances": check_evolved_variances,
    "chsh_phase_covariance": check_chsh_phase_covariance,
    "finite_gain_limit": check_finite_gain_limit,
    "boundary_sampler": check_boundary_sampler,
    "determinism": check_determinism,
    "single_mode_gates": check_single_mode_gates,
}


def run_validation(config: ExperimentConfig, checks: dict | None = None) -> ExperimentReport:
    """
    Run every check and record pass/fail per invariant. A check that raises
    fails, with the error message in its statistics.
    """
    checks = VALIDATION_CHECKS if checks is None else checks
    statistics: dict = {}
    gates: dict[str, bool] = {}
    for name, check in checks.items():
        logger.info("Validation check %s", name)
        try:
            values, passed = check(config)
        except PhaseSpaceError as e:
            logger.warning("Validation check %s raised: %s", name, e)
            values, passed = {"error": str(e)}, False
        statistics[name] = values
        gates[name] = bool(passed)
    return ExperimentReport(
        experiment=str(Experiment.VALIDATE),
        config=config.report_dict(),
        statistics=statistics,
        gates=gates,
    )
