"""
Samplers for the temporal boundary conditions.

Backward (amplified) variables are drawn at the future boundary t_f from the
amplified Husimi marginal; forward (attenuated) variables are drawn at t_1,
conditioned on where the paired backward path arrived.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass
from dataclasses import field
from enum import StrEnum

import numpy as np
from django.conf import settings
from numpy.typing import ArrayLike
from numpy.typing import NDArray

from fb_phase_space.exceptions import ConfigurationError
from fb_phase_space.exceptions import RejectionSamplingError
from fb_phase_space.oracle.fock import FockState
from fb_phase_space.oracle.fock import build_state
from fb_phase_space.oracle.fock import q_eval
from fb_phase_space.oracle.quadrature import BornSampler
from fb_phase_space.oracle.quadrature import QuadratureGrid
from fb_phase_space.oracle.quadrature import quadrature_pdf
from fb_phase_space.simulation.states import ConditionalForm
from fb_phase_space.simulation.states import EPRSpec
from fb_phase_space.simulation.states import MixtureSpec
from fb_phase_space.simulation.states import PairCoherentSpec
from fb_phase_space.simulation.states import PhasePoint
from fb_phase_space.simulation.states import SuperpositionSpec
from fb_phase_space.simulation.states import conditional_bracket
from fb_phase_space.simulation.states import q_epr_boundary
from fb_phase_space.simulation.states import q_marginal_x_future
from fb_phase_space.simulation.states import rotate

logger = logging.getLogger(__name__)

ENVELOPE_CONSTANT = 2.0
DEFAULT_MAX_TRIES = 1_000_000


class BoundaryKind(StrEnum):
    GAUSSIAN_MIXTURE = "gaussian-mixture"
    GAUSSIAN = "gaussian"
    CONDITIONAL_1D = "conditional-1d"
    GRID = "grid"


class TimeTag(StrEnum):
    INITIAL = "t1"
    FINAL = "tf"


class EPRSetting(StrEnum):
    """Quadratures amplified at (A, B)."""

    XX = "xx"
    PP = "pp"
    XP = "xp"


@dataclass(frozen=True, slots=True)
class BoundaryModel:
    """
    A boundary sampling law.

    Gaussian kinds carry weights, means and covariances; the conditional kind
    carries the envelope constant of its rejection sampler.
    """

    kind: BoundaryKind
    time_tag: TimeTag
    weights: tuple[float, ...] = (1.0,)
    means: NDArray[np.float64] = field(default_factory=lambda: np.zeros(1))
    covariance: NDArray[np.float64] = field(default_factory=lambda: np.ones((1, 1)))
    envelope_constant: float | None = None

    def __post_init__(self):
        if abs(sum(self.weights) - 1.0) > 1e-12 or min(self.weights) < 0:
            raise ConfigurationError("weights", "boundary mixture weights must be >= 0 and sum to 1")
        covariance = np.atleast_2d(self.covariance)
        if np.min(np.linalg.eigvalsh(covariance)) < -1e-12 * max(1.0, float(np.max(np.abs(covariance)))):
            raise ConfigurationError("covariance", "boundary covariance must be positive semi-definite")
        if self.envelope_constant is not None and self.envelope_constant < 1:
            raise ConfigurationError("envelope_constant", "an envelope must dominate a normalized target")


@dataclass(frozen=True, slots=True)
class BoundarySample:
    values: NDArray[np.float64]
    labels: NDArray[np.int64]
    component_means: NDArray[np.float64]


def future_x_model(spec: SuperpositionSpec | MixtureSpec, g: float, t_f: float) -> BoundaryModel:
    marginal = q_marginal_x_future(spec, g, t_f)
    return BoundaryModel(
        kind=BoundaryKind.GAUSSIAN_MIXTURE,
        time_tag=TimeTag.FINAL,
        weights=marginal.weights,
        means=np.asarray(marginal.means),
        covariance=np.array([[marginal.variance]]),
    )


def sample_future_x(
    spec: SuperpositionSpec | MixtureSpec,
    g: float,
    t_f: float,
    n: int,
    rng: np.random.Generator,
) -> BoundarySample:
    """
    Draw amplified boundary values x(t_f) with their component labels.

    Labels are 1-based: label j means the draw came from Gaussian(G x_j, sigma^2(t_f)).
    """
    if n < 1:
        raise ConfigurationError("n", f"must be >= 1 (got {n!r})")
    model = future_x_model(spec, g, t_f)
    weights = np.asarray(model.weights)
    index = rng.choice(weights.size, size=n, p=weights / weights.sum())
    component_means = model.means[index]
    values = component_means + math.sqrt(model.covariance[0, 0]) * rng.standard_normal(n)
    return BoundarySample(values=values, labels=index.astype(np.int64) + 1, component_means=component_means)


def conditional_p_model(spec: SuperpositionSpec) -> BoundaryModel:
    return BoundaryModel(
        kind=BoundaryKind.CONDITIONAL_1D,
        time_tag=TimeTag.INITIAL,
        covariance=np.array([[spec.sigma_p2]]),
        envelope_constant=ENVELOPE_CONSTANT,
    )


def _broadcast_conditioning(x_t1: ArrayLike, n: int | None) -> NDArray[np.float64]:
    x = np.atleast_1d(np.asarray(x_t1, dtype=np.float64))
    if not np.all(np.isfinite(x)):
        raise ConfigurationError("x_t1", "conditioning values must be finite")
    if n is None or x.size == n:
        return x
    if x.size == 1:
        return np.full(n, x[0])
    raise ConfigurationError("n", f"got {x.size} conditioning values for {n} draws")


def sample_conditional_p(
    spec: SuperpositionSpec,
    x_t1: ArrayLike,
    n: int | None,
    rng: np.random.Generator,
    *,
    form: ConditionalForm = ConditionalForm.PRINTED,
    max_tries: int | None = None,
) -> NDArray[np.float64]:
    """
    Draw p(t_1) from Q(p | x(t_1)) by rejection from its Gaussian factor.

    The bracket lies in [0, 2], so a proposal is accepted with probability
    bracket / 2 and the overall acceptance rate is exactly 1/2. ``x_t1`` may
    hold one conditioning value per draw, or a single value for all ``n``.
    """
    model = conditional_p_model(spec)
    if max_tries is None:
        max_tries = getattr(settings, "SIMULATION_REJECTION_MAX_TRIES", DEFAULT_MAX_TRIES)
    x = _broadcast_conditioning(x_t1, n)
    sigma_p = math.sqrt(model.covariance[0, 0])
    samples = np.empty(x.size)
    pending = np.arange(x.size)
    rounds = 0
    while pending.size:
        rounds += 1
        if rounds > max_tries:
            msg = f"{pending.size} draws still pending after {max_tries} tries each"
            raise RejectionSamplingError(msg)
        proposal = sigma_p * rng.standard_normal(pending.size)
        uniform = rng.uniform(size=pending.size)
        bracket = np.asarray(conditional_bracket(spec, proposal, x[pending], form=form))
        accept = model.envelope_constant * uniform <= bracket
        samples[pending[accept]] = proposal[accept]
        pending = pending[~accept]
    return samples


def sample_initial_p(
    spec: SuperpositionSpec | MixtureSpec,
    x_t1: ArrayLike,
    rng: np.random.Generator,
    *,
    form: ConditionalForm = ConditionalForm.PRINTED,
) -> NDArray[np.float64]:
    """p(t_1) for either state: mixtures have no interference, so p is independent of x."""
    if isinstance(spec, SuperpositionSpec):
        return sample_conditional_p(spec, x_t1, None, rng, form=form)
    x = _broadcast_conditioning(x_t1, None)
    return math.sqrt(spec.sigma_p2) * rng.standard_normal(x.size)


def epr_future_model(spec: EPRSpec, g: float, t_f: float, setting: EPRSetting) -> BoundaryModel:
    """Joint Gaussian of the two amplified quadratures at t_f."""
    setting = EPRSetting(setting)
    if setting is EPRSetting.XP:
        # x_A and p_B are uncorrelated in the two-mode squeezed vacuum.
        variance = q_epr_boundary(spec, g, t_f, "x").covariance()[0, 0]
        covariance = np.diag([variance, variance])
    else:
        quadrature = "x" if setting is EPRSetting.XX else "p"
        covariance = q_epr_boundary(spec, g, t_f, quadrature).covariance()
    return BoundaryModel(
        kind=BoundaryKind.GAUSSIAN,
        time_tag=TimeTag.FINAL,
        means=np.zeros(2),
        covariance=covariance,
    )


def sample_epr_future(
    spec: EPRSpec,
    g: float,
    t_f: float,
    setting: EPRSetting,
    n: int,
    rng: np.random.Generator,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """
    Amplified (A, B) quadrature pairs at t_f.

    For (x, x) and (p, p) the sum and difference are drawn independently and
    mapped back with a = (s + d)/2, b = (s - d)/2.
    """
    if n < 1:
        raise ConfigurationError("n", f"must be >= 1 (got {n!r})")
    setting = EPRSetting(setting)
    if setting is EPRSetting.XP:
        std = math.sqrt(epr_future_model(spec, g, t_f, setting).covariance[0, 0])
        draws = std * rng.standard_normal((2, n))
        return draws[0], draws[1]
    boundary = q_epr_boundary(spec, g, t_f, "x" if setting is EPRSetting.XX else "p")
    total = math.sqrt(boundary.sum_variance) * rng.standard_normal(n)
    difference = math.sqrt(boundary.difference_variance) * rng.standard_normal(n)
    return (total + difference) / 2.0, (total - difference) / 2.0


@functools.lru_cache(maxsize=32)
def _cached_born_sampler(prep: PairCoherentSpec | EPRSpec, rotation: tuple[float, float], extent: float, points: int):
    pdf = quadrature_pdf(build_state(prep), rotation, QuadratureGrid(extent=extent, points=points))
    return BornSampler(pdf)


def born_sampler(state, rotation: tuple[float, float], grid=None):
    """
    Grid inverse-CDF sampler of the rotated quadrature joint |<u, v|psi>|^2.

    Built once per (state, rotation, grid) for hashable state preparations.
    """
    grid = grid or QuadratureGrid.from_settings()
    rotation = (float(rotation[0]), float(rotation[1]))
    if isinstance(state, FockState):
        return BornSampler(quadrature_pdf(state, rotation, grid))
    return _cached_born_sampler(state, rotation, grid.extent, grid.points)


def sample_born_boundary(
    state,
    rotation: tuple[float, float],
    g: float,
    t_f: float,
    n: int,
    rng: np.random.Generator,
    *,
    grid=None,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """
    Amplified rotated quadratures (x_theta_A, x_phi_B) at t_f.

    Draws (u, v) from the Born joint and returns (G u + N(0,1), G v + N(0,1)):
    the Husimi marginal of the amplified state is its Born distribution
    dilated by G and smoothed by unit vacuum noise.
    """
    if n < 1:
        raise ConfigurationError("n", f"must be >= 1 (got {n!r})")
    draws = born_sampler(state, rotation, grid).sample(n, rng)
    gain = math.exp(g * t_f)
    amplified = gain * draws + rng.standard_normal(draws.shape)
    return amplified[:, 0], amplified[:, 1]


def sample_conditional_conjugate(
    state,
    rotation: tuple[float, float],
    x_a: ArrayLike,
    x_b: ArrayLike,
    rng: np.random.Generator,
    *,
    extent: float = 8.0,
    points: int = 64,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """
    Rotated conjugate pair (p_theta_A, p_phi_B) at t_1 drawn from Q given (x_theta_A, x_phi_B).

    For each run the conditional Husimi density is tabulated on a
    ``points`` x ``points`` grid in (p_A, p_B) and sampled by inverse CDF with
    uniform jitter inside the chosen cell. Costly; meant for stored runs.
    """
    fock = state if isinstance(state, FockState) else build_state(state)
    x_a = np.atleast_1d(np.asarray(x_a, dtype=np.float64))
    x_b = np.atleast_1d(np.asarray(x_b, dtype=np.float64))
    spacing = 2.0 * extent / points
    axis = -extent + spacing * (np.arange(points) + 0.5)
    p_a_grid, p_b_grid = np.meshgrid(axis, axis, indexing="ij")
    theta, phi = rotation
    out_a = np.empty(x_a.size)
    out_b = np.empty(x_a.size)
    for run in range(x_a.size):
        rotated = PhasePoint(x_a=x_a[run], p_a=p_a_grid, x_b=x_b[run], p_b=p_b_grid)
        density = np.asarray(q_eval(fock, rotate(rotated, -theta, -phi))).ravel()
        cumulative = np.cumsum(density)
        cell = int(np.searchsorted(cumulative, rng.uniform() * cumulative[-1], side="right"))
        cell = min(cell, density.size - 1)
        jitter = rng.uniform(-0.5, 0.5, size=2) * spacing
        out_a[run] = axis[cell // points] + jitter[0]
        out_b[run] = axis[cell % points] + jitter[1]
    return out_a, out_b
