"""
Truncated Fock-space reference states.

Operators follow the usual number-basis conventions: a|n> = sqrt(n)|n-1>,
D(beta) = exp(beta a† - beta* a) and S(z) = exp((z* a^2 - z a†^2)/2), so a
positive real z squeezes the x = a + a† quadrature.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from django.conf import settings
from numpy.typing import NDArray
from scipy import sparse
from scipy.sparse.linalg import expm_multiply

from fb_phase_space.exceptions import ConfigurationError
from fb_phase_space.exceptions import TruncationError
from fb_phase_space.simulation.states import EPRSpec
from fb_phase_space.simulation.states import FloatOrArray
from fb_phase_space.simulation.states import Measure
from fb_phase_space.simulation.states import MixtureSpec
from fb_phase_space.simulation.states import PairCoherentSpec
from fb_phase_space.simulation.states import PhasePoint
from fb_phase_space.simulation.states import StatePrep
from fb_phase_space.simulation.states import SuperpositionSpec
from fb_phase_space.simulation.states import measure_factor

logger = logging.getLogger(__name__)

TAIL_FRACTION = 0.1
PARSEVAL_TOLERANCE = 1e-10
EVALUATION_TAIL_LIMIT = 1e-8


def _tail_tolerance() -> float:
    return getattr(settings, "ORACLE_TAIL_TOLERANCE", 1e-10)


def _max_cutoff() -> int:
    return getattr(settings, "ORACLE_MAX_CUTOFF", 4096)


def _tail_start(cutoff: int) -> int:
    return min(cutoff - 1, math.ceil((1.0 - TAIL_FRACTION) * cutoff))


def tail_mass(coefficients: NDArray[np.complex128]) -> float:
    """Probability held by the top 10% of number indices (either mode for two modes)."""
    probabilities = np.abs(coefficients) ** 2
    start = _tail_start(coefficients.shape[0])
    if coefficients.ndim == 1:
        return float(probabilities[start:].sum())
    head = probabilities[:start, :start].sum()
    return float(probabilities.sum() - head)


@dataclass(frozen=True, eq=False)
class FockState:
    """Pure state: a vector (one mode) or an N x N matrix C[n, m] on |n>|m> (two modes)."""

    coefficients: NDArray[np.complex128]

    def __post_init__(self):
        coefficients = np.array(self.coefficients, dtype=np.complex128)
        if coefficients.ndim not in (1, 2):
            raise ConfigurationError("coefficients", "expected one or two modes")
        if coefficients.ndim == 2 and coefficients.shape[0] != coefficients.shape[1]:
            raise ConfigurationError("coefficients", "two-mode coefficients must be square")
        coefficients.setflags(write=False)
        object.__setattr__(self, "coefficients", coefficients)

    @property
    def modes(self) -> int:
        return self.coefficients.ndim

    @property
    def cutoff(self) -> int:
        return self.coefficients.shape[0]

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coefficients))

    def tail_mass(self) -> float:
        return tail_mass(self.coefficients)

    def is_diagonal(self) -> bool:
        if self.modes == 1:
            return False
        return not np.any(self.coefficients - np.diag(np.diag(self.coefficients)))

    def with_cutoff(self, cutoff: int) -> FockState:
        """Zero-pad or truncate to a new cutoff (no renormalization)."""
        shape = (cutoff,) * self.modes
        padded = np.zeros(shape, dtype=np.complex128)
        keep = min(cutoff, self.cutoff)
        padded[(slice(0, keep),) * self.modes] = self.coefficients[(slice(0, keep),) * self.modes]
        return FockState(padded)

    def check(self, tolerance: float | None = None) -> FockState:
        """Enforce Parseval and the tail-mass gate."""
        tolerance = _tail_tolerance() if tolerance is None else tolerance
        if abs(self.norm**2 - 1.0) > PARSEVAL_TOLERANCE:
            raise TruncationError(f"norm^2 = {self.norm**2!r} after truncation at N={self.cutoff}")
        tail = self.tail_mass()
        if tail >= tolerance:
            raise TruncationError(f"tail mass {tail:.3e} >= {tolerance:g} at cutoff {self.cutoff}")
        return self


@dataclass(frozen=True, eq=False)
class FockMixture:
    """Diagonal mixture of pure single-mode components."""

    weights: tuple[float, ...]
    components: tuple[FockState, ...]

    @property
    def modes(self) -> int:
        return self.components[0].modes

    @property
    def cutoff(self) -> int:
        return max(c.cutoff for c in self.components)


def displaced_squeezed_coefficients(beta: complex, r: float, cutoff: int) -> NDArray[np.complex128]:
    """
    Number-basis amplitudes of D(beta) S(r)|0> for real r (either sign).

    The state is the eigenvector of a cosh r + a† sinh r with eigenvalue
    beta cosh r + beta* sinh r, which gives a three-term recursion started
    from <0|D(beta)S(r)|0> = exp(-|beta|^2/2 - beta*^2 tanh(r)/2) / sqrt(cosh r).
    """
    mu, nu = math.cosh(r), math.sinh(r)
    gamma = beta * mu + np.conj(beta) * nu
    c = np.zeros(cutoff, dtype=np.complex128)
    c[0] = np.exp(-abs(beta) ** 2 / 2.0 - np.conj(beta) ** 2 * math.tanh(r) / 2.0) / math.sqrt(mu)
    if cutoff > 1:
        c[1] = gamma * c[0] / mu
    for n in range(1, cutoff - 1):
        c[n + 1] = (gamma * c[n] - nu * math.sqrt(n) * c[n - 1]) / (mu * math.sqrt(n + 1))
    return c


def _converged(
    builder: Callable[[int], NDArray[np.complex128]],
    initial_cutoff: int,
    *,
    fixed: bool,
) -> NDArray[np.complex128]:
    """
    Build at increasing cutoffs until both the tail and the missing norm are below tolerance.
    """
    tolerance = _tail_tolerance()
    cutoff = initial_cutoff
    while True:
        coefficients = builder(cutoff)
        missing = 1.0 - float(np.sum(np.abs(coefficients) ** 2))
        tail = tail_mass(coefficients)
        if tail < tolerance and missing < tolerance:
            return coefficients / np.linalg.norm(coefficients)
        if fixed or cutoff >= _max_cutoff():
            msg = f"cutoff {cutoff} leaves tail mass {max(tail, missing):.3e} (tolerance {tolerance:g})"
            raise TruncationError(msg)
        logger.debug("Raising cutoff from %d (tail %.2e)", cutoff, tail)
        cutoff = min(2 * cutoff, _max_cutoff())


def displaced_squeezed_state(x_mean: float, r: float, cutoff: int | None = None) -> FockState:
    """Squeezed eigenstate approximation D(x_mean/2) S(r)|0> centred at x = x_mean."""
    initial = cutoff or getattr(settings, "ORACLE_SINGLE_MODE_CUTOFF", 60)
    coefficients = _converged(
        lambda n: displaced_squeezed_coefficients(x_mean / 2.0, r, n), initial, fixed=cutoff is not None
    )
    return FockState(coefficients)


def _superposition_coefficients(spec: SuperpositionSpec, g: float, t: float, cutoff: int) -> NDArray[np.complex128]:
    gain = math.exp(g * t)
    r = spec.r - g * t
    first = displaced_squeezed_coefficients(gain * spec.x1 / 2.0, r, cutoff)
    second = displaced_squeezed_coefficients(gain * spec.x2 / 2.0, r, cutoff)
    return spec.c1 * first + 1j * spec.c2_mag * second


def build_state(prep: StatePrep, cutoff: int | None = None) -> FockState | FockMixture:
    """
    Number-basis representation of a state preparation.

    With ``cutoff=None`` the configured default is raised until the tail gate
    passes; an explicit cutoff is used as-is and must pass the gate.
    """
    return evolve_prep(prep, g=0.0, duration=0.0, cutoff=cutoff)


def evolve_prep(prep: StatePrep, g: float, duration: float, cutoff: int | None = None) -> FockState | FockMixture:
    """
    The prepared state after amplifying x for ``duration`` at gain rate ``g``.

    Displaced-squeezed components stay displaced-squeezed: means scale by
    e^{g duration} and the squeezing parameter shifts by -g duration. Only
    single-mode preparations (and the unevolved two-mode ones) have this form.
    """
    fixed = cutoff is not None
    single = cutoff or getattr(settings, "ORACLE_SINGLE_MODE_CUTOFF", 60)
    if isinstance(prep, SuperpositionSpec):
        coefficients = _converged(lambda n: _superposition_coefficients(prep, g, duration, n), single, fixed=fixed)
        return FockState(coefficients)
    if isinstance(prep, MixtureSpec):
        gain = math.exp(g * duration)
        components = tuple(
            FockState(
                _converged(
                    lambda n, m=mean: displaced_squeezed_coefficients(gain * m / 2.0, prep.r - g * duration, n),
                    single,
                    fixed=fixed,
                )
            )
            for mean in prep.means
        )
        return FockMixture(weights=prep.weights, components=components)
    if duration != 0:
        raise ConfigurationError("prep", "two-mode states are evolved with evolve() on their Fock form")
    two_mode = cutoff or getattr(settings, "ORACLE_TWO_MODE_CUTOFF", 40)
    if isinstance(prep, EPRSpec):
        eta = prep.eta

        def schmidt(n: int) -> NDArray[np.complex128]:
            return np.diag(math.sqrt(1.0 - eta**2) * eta ** np.arange(n)).astype(np.complex128)

        return FockState(_converged(schmidt, two_mode, fixed=fixed))
    if isinstance(prep, PairCoherentSpec):
        size = max(two_mode, prep.truncation) if not fixed else cutoff
        if size < prep.truncation:
            raise TruncationError(f"cutoff {size} is below the pair-coherent truncation {prep.truncation}")
        diagonal = np.zeros(size, dtype=np.complex128)
        diagonal[: prep.truncation] = prep.coefficients()
        return FockState(np.diag(diagonal))
    raise ConfigurationError("prep", f"unsupported state preparation {type(prep).__name__}")


def annihilation(cutoff: int) -> sparse.csr_matrix:
    return sparse.diags(np.sqrt(np.arange(1, cutoff, dtype=np.float64)), 1, format="csr", dtype=np.complex128)


def squeeze_generator(cutoff: int, g: float, duration: float, theta: float) -> sparse.csr_matrix:
    """
    -i H t for H = (i g / 2)(e^{2i theta} a†^2 - e^{-2i theta} a^2), which amplifies x_theta.
    """
    a = annihilation(cutoff)
    a_sq = a @ a
    phase = np.exp(2j * theta)
    return (g * duration / 2.0) * (phase * a_sq.conj().T - np.conj(phase) * a_sq)


def _evolve_pure(state: FockState, g: float, duration: float, angles: Sequence[float]) -> FockState:
    tolerance = _tail_tolerance()
    cutoff = state.cutoff
    while True:
        padded = state.with_cutoff(cutoff).coefficients
        if state.modes == 1:
            evolved = expm_multiply(squeeze_generator(cutoff, g, duration, angles[0]), padded)
        else:
            evolved = expm_multiply(squeeze_generator(cutoff, g, duration, angles[0]), padded)
            evolved = expm_multiply(squeeze_generator(cutoff, g, duration, angles[1]), evolved.T).T
        tail = tail_mass(evolved)
        if tail < tolerance:
            return FockState(evolved).check(tolerance)
        if cutoff >= _max_cutoff():
            raise TruncationError(f"evolution leaves tail mass {tail:.3e} at the maximum cutoff {cutoff}")
        cutoff = min(2 * cutoff, _max_cutoff())


def evolve(
    state: FockState | FockMixture,
    g: float,
    duration: float,
    theta: float | Sequence[float] = 0.0,
) -> FockState | FockMixture:
    """
    Apply the squeeze Hamiltonian with setting angle ``theta`` (one per mode) for ``duration``.

    Works by sparse matrix-exponential action in a zero-padded number basis; the
    cutoff doubles until the evolved tail passes the gate.
    """
    if duration < 0:
        raise ConfigurationError("duration", "must be >= 0")
    if duration == 0 or g == 0:
        return state
    if isinstance(state, FockMixture):
        return FockMixture(state.weights, tuple(evolve(c, g, duration, theta) for c in state.components))
    angles = (theta,) * state.modes if np.isscalar(theta) else tuple(theta)
    if len(angles) != state.modes:
        raise ConfigurationError("theta", f"need one angle per mode ({state.modes})")
    return _evolve_pure(state, g, duration, angles)


def coherent_overlaps(alpha: NDArray[np.complex128], cutoff: int) -> NDArray[np.complex128]:
    """<alpha|n> for every point and n < cutoff, shape (points, cutoff)."""
    alpha = np.atleast_1d(alpha).ravel()
    overlaps = np.empty((alpha.size, cutoff), dtype=np.complex128)
    overlaps[:, 0] = np.exp(-np.abs(alpha) ** 2 / 2.0)
    conj_alpha = np.conj(alpha)
    for n in range(1, cutoff):
        overlaps[:, n] = overlaps[:, n - 1] * conj_alpha / math.sqrt(n)
    return overlaps


def _pure_q(state: FockState, pt: PhasePoint) -> NDArray[np.float64]:
    shape = np.broadcast(*(np.asarray(v) for v in (pt.x_a, pt.p_a, pt.x_b, pt.p_b))).shape
    alpha = np.broadcast_to(pt.alpha(), shape)
    overlaps_a = coherent_overlaps(alpha, state.cutoff)
    if state.modes == 1:
        amplitude = overlaps_a @ state.coefficients
        return (np.abs(amplitude) ** 2 / math.pi).reshape(shape)
    overlaps_b = coherent_overlaps(np.broadcast_to(pt.beta(), shape), state.cutoff)
    if state.is_diagonal():
        amplitude = (overlaps_a * overlaps_b) @ np.diag(state.coefficients)
    else:
        amplitude = np.sum((overlaps_a @ state.coefficients) * overlaps_b, axis=1)
    return (np.abs(amplitude) ** 2 / math.pi**2).reshape(shape)


def q_eval(state: FockState | FockMixture, pt: PhasePoint, *, measure: Measure = "alpha") -> FloatOrArray:
    """
    Husimi Q = <alpha|rho|alpha>/pi per mode, from coherent-state overlaps.

    Exact for the truncated state; states that fail the tail gate are rejected.
    """
    if isinstance(state, FockMixture):
        pairs = zip(state.weights, state.components, strict=True)
        density = sum(w * np.asarray(q_eval(c, pt, measure="alpha")) for w, c in pairs)
        modes = state.modes
    else:
        tail = state.tail_mass()
        if tail >= EVALUATION_TAIL_LIMIT:
            raise TruncationError(f"state tail mass {tail:.3e} is too large to evaluate Q reliably")
        density = _pure_q(state, pt)
        modes = state.modes
    density = np.asarray(density) * measure_factor(measure, modes) / 4.0**modes
    return float(density) if density.ndim == 0 else density


def quadrature_moments(state: FockState | FockMixture, theta: float = 0.0) -> tuple[float, float]:
    """Mean and variance of the single-mode quadrature x_theta = a e^{-i theta} + a† e^{i theta}."""
    if isinstance(state, FockMixture):
        moments = [quadrature_moments(c, theta) for c in state.components]
        mean = sum(w * m for w, (m, _) in zip(state.weights, moments, strict=True))
        second = sum(w * (v + m**2) for w, (m, v) in zip(state.weights, moments, strict=True))
        return mean, second - mean**2
    if state.modes != 1:
        raise ConfigurationError("state", "quadrature_moments needs a single-mode state")
    c = state.coefficients
    n = np.arange(state.cutoff)
    mean_a = np.sum(np.conj(c[:-1]) * np.sqrt(n[1:]) * c[1:])
    mean_a2 = np.sum(np.conj(c[:-2]) * np.sqrt(n[1:-1] * n[2:]) * c[2:])
    mean_n = np.sum(n * np.abs(c) ** 2)
    mean = 2.0 * float(np.real(np.exp(-1j * theta) * mean_a))
    second = 2.0 * float(np.real(np.exp(-2j * theta) * mean_a2)) + 2.0 * float(mean_n) + 1.0
    return mean, second - mean**2


def _lower(coefficients: NDArray[np.complex128], axis: int) -> NDArray[np.complex128]:
    """Apply the annihilation operator of mode ``axis`` to a two-mode coefficient matrix."""
    moved = np.moveaxis(coefficients, axis, 0)
    lowered = np.zeros_like(moved)
    lowered[:-1] = np.sqrt(np.arange(1, moved.shape[0]))[:, None] * moved[1:]
    return np.moveaxis(lowered, 0, axis)


def quadrature_covariance(state: FockState, theta_a: float = 0.0, theta_b: float = 0.0) -> NDArray[np.float64]:
    """
    Born covariance matrix of (x_theta_A, x_theta_B) for a pure two-mode state,
    from number-basis moments.
    """
    if state.modes != 2:
        raise ConfigurationError("state", "quadrature_covariance needs a two-mode state")
    c = state.coefficients
    n = np.arange(state.cutoff)
    la, lb = _lower(c, 0), _lower(c, 1)
    mean_a, mean_b = np.vdot(c, la), np.vdot(c, lb)
    mean_aa, mean_bb = np.vdot(c, _lower(la, 0)), np.vdot(c, _lower(lb, 1))
    mean_ab, mean_adag_b = np.vdot(c, _lower(la, 1)), np.vdot(la, lb)
    probabilities = np.abs(c) ** 2
    n_a, n_b = float(np.sum(n[:, None] * probabilities)), float(np.sum(n[None, :] * probabilities))

    x_a = 2.0 * np.real(np.exp(-1j * theta_a) * mean_a)
    x_b = 2.0 * np.real(np.exp(-1j * theta_b) * mean_b)
    var_a = 2.0 * np.real(np.exp(-2j * theta_a) * mean_aa) + 2.0 * n_a + 1.0 - x_a**2
    var_b = 2.0 * np.real(np.exp(-2j * theta_b) * mean_bb) + 2.0 * n_b + 1.0 - x_b**2
    cross = 2.0 * np.real(np.exp(-1j * (theta_a + theta_b)) * mean_ab)
    cross += 2.0 * np.real(np.exp(1j * (theta_a - theta_b)) * mean_adag_b)
    covariance = cross - x_a * x_b
    return np.array([[var_a, covariance], [covariance, var_b]])
