"""
State preparations and closed-form Husimi Q evaluators.

Phase-space points are expressed in quadrature units, x = a + a† and
p = (a - a†)/i, so the vacuum Husimi variance is 2 per quadrature and the
coherent amplitude is alpha = (x + ip)/2.

Every evaluator takes a ``measure`` keyword. ``"quadrature"`` densities
integrate to one over dx dp per mode; ``"alpha"`` densities integrate to one
over d²alpha per mode and are therefore 4 times larger per mode. The default
of each evaluator is the measure its closed form is usually quoted in: the
single-mode superposition per dx dp, the two-mode states per d²alpha.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import StrEnum
from typing import ClassVar
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike
from numpy.typing import NDArray
from scipy import special
from scipy import stats

from fb_phase_space.exceptions import ConfigurationError
from fb_phase_space.exceptions import StateValidationError
from fb_phase_space.exceptions import TruncationError

NORMALIZATION_TOLERANCE = 1e-12
PAIR_COHERENT_TAIL_TOLERANCE = 1e-10

Measure = Literal["quadrature", "alpha"]
FloatOrArray = float | NDArray[np.float64]


class ConditionalForm(StrEnum):
    """
    Which closed form is used for Q(p | x) of the two-component superposition.

    ``PRINTED`` is the widely quoted expression with doubled arguments,
    ``1 - sin(2 p x1 / s) / cosh(2 x x1 / s)``. ``CONSISTENT`` is the
    conditional implied by the joint superposition density itself, so that
    sampling x then p reproduces the joint exactly.
    """

    PRINTED = "printed"
    CONSISTENT = "consistent"


def _as_array(value: ArrayLike) -> NDArray[np.float64]:
    return np.asarray(value, dtype=np.float64)


def _unwrap(result: NDArray[np.float64]) -> FloatOrArray:
    if result.ndim == 0:
        return float(result)
    return result


def measure_factor(measure: Measure, modes: int) -> float:
    """Conversion factor from a per-dx-dp density to the requested measure."""
    if measure == "quadrature":
        return 1.0
    if measure == "alpha":
        return 4.0**modes
    raise ConfigurationError("measure", f"unknown measure {measure!r}")


@dataclass(frozen=True, slots=True)
class PhasePoint:
    """
    A point (or a vectorized batch of points) in one- or two-mode phase space.

    Single-mode evaluators read ``x_a`` and ``p_a`` only; ``x`` and ``p`` are
    aliases for them.
    """

    x_a: ArrayLike
    p_a: ArrayLike
    x_b: ArrayLike = 0.0
    p_b: ArrayLike = 0.0

    def __post_init__(self):
        for name in ("x_a", "p_a", "x_b", "p_b"):
            if not np.all(np.isfinite(_as_array(getattr(self, name)))):
                raise StateValidationError(name, "phase-space coordinates must be finite")

    @classmethod
    def single(cls, x: ArrayLike, p: ArrayLike) -> PhasePoint:
        return cls(x_a=x, p_a=p)

    @property
    def x(self) -> ArrayLike:
        return self.x_a

    @property
    def p(self) -> ArrayLike:
        return self.p_a

    def alpha(self) -> NDArray[np.complex128]:
        return (_as_array(self.x_a) + 1j * _as_array(self.p_a)) / 2.0

    def beta(self) -> NDArray[np.complex128]:
        return (_as_array(self.x_b) + 1j * _as_array(self.p_b)) / 2.0


@dataclass(frozen=True, slots=True)
class SuperpositionSpec:
    """
    c1|x1> + i|c2||x2>, each eigenstate regularized as D(x_j/2)S(r)|0>.
    """

    kind: ClassVar[str] = "superposition"

    c1: float = math.sqrt(0.5)
    c2_mag: float = math.sqrt(0.5)
    x1: float = 0.8
    x2: float = -0.8
    r: float = 2.0

    def __post_init__(self):
        for name in ("c1", "c2_mag", "x1", "x2", "r"):
            if not math.isfinite(getattr(self, name)):
                raise StateValidationError(name, "must be finite")
        if self.c2_mag < 0:
            raise StateValidationError("c2_mag", "is a magnitude and must be >= 0")
        total = self.c1**2 + self.c2_mag**2
        if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
            raise StateValidationError(
                "c1",
                f"normalization c1^2 + c2_mag^2 = 1 violated (got {total!r})",
            )
        if self.x1 == self.x2:
            raise StateValidationError("x2", "eigenvalues x1 and x2 must be distinct")
        if self.r <= 0:
            raise StateValidationError("r", "squeezing must be > 0")

    @property
    def sigma_x2(self) -> float:
        return 1.0 + math.exp(-2.0 * self.r)

    @property
    def sigma_p2(self) -> float:
        return 1.0 + math.exp(2.0 * self.r)

    @property
    def weights(self) -> tuple[float, float]:
        return (self.c1**2, self.c2_mag**2)

    @property
    def means(self) -> tuple[float, float]:
        return (self.x1, self.x2)

    def matched_mixture(self) -> MixtureSpec:
        """The diagonal mixture with the same Born weights and eigenvalues."""
        c1_sq, c2_sq = self.weights
        # Exact renormalization keeps the 1e-12 invariant under rounding.
        return MixtureSpec(
            weights=(c1_sq / (c1_sq + c2_sq), c2_sq / (c1_sq + c2_sq)),
            means=self.means,
            r=self.r,
        )


@dataclass(frozen=True, slots=True)
class MixtureSpec:
    kind: ClassVar[str] = "mixture"

    weights: tuple[float, ...] = (0.5, 0.5)
    means: tuple[float, ...] = (0.8, -0.8)
    r: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "means", tuple(float(m) for m in self.means))
        if not self.weights:
            raise StateValidationError("weights", "at least one component is required")
        if len(self.weights) != len(self.means):
            raise StateValidationError("means", "needs exactly one mean per weight")
        if any(w < 0 or not math.isfinite(w) for w in self.weights):
            raise StateValidationError("weights", "weights must be finite and >= 0")
        if abs(sum(self.weights) - 1.0) > NORMALIZATION_TOLERANCE:
            raise StateValidationError(
                "weights",
                f"normalization sum(weights) = 1 violated (got {sum(self.weights)!r})",
            )
        if not all(math.isfinite(m) for m in self.means):
            raise StateValidationError("means", "must be finite")
        if not (math.isfinite(self.r) and self.r > 0):
            raise StateValidationError("r", "squeezing must be > 0")

    @property
    def sigma_x2(self) -> float:
        return 1.0 + math.exp(-2.0 * self.r)

    @property
    def sigma_p2(self) -> float:
        return 1.0 + math.exp(2.0 * self.r)


@dataclass(frozen=True, slots=True)
class EPRSpec:
    """Two-mode squeezed vacuum with Schmidt coefficients proportional to tanh(r)^n."""

    kind: ClassVar[str] = "epr"

    r: float = 2.0

    def __post_init__(self):
        # r = 0 is the product vacuum, kept as the uncorrelated control.
        if not (math.isfinite(self.r) and self.r >= 0):
            raise StateValidationError("r", "squeezing must be finite and >= 0")

    @property
    def eta(self) -> float:
        return math.tanh(self.r)


def _pair_coherent_log_weights(modulus: float, n_terms: int) -> NDArray[np.float64]:
    n = np.arange(n_terms, dtype=np.float64)
    if modulus == 0:
        return np.where(n == 0, 0.0, -np.inf)
    return 2.0 * n * math.log(modulus) - 2.0 * special.gammaln(n + 1.0)


def pair_coherent_tail(modulus: float, truncation: int) -> float:
    """Probability carried by number states n >= truncation."""
    if modulus == 0:
        return 0.0
    # Terms fall off faster than geometrically well before this many.
    span = truncation + 64 + int(4 * modulus)
    log_w = _pair_coherent_log_weights(modulus, span)
    log_total = math.log(special.i0e(2.0 * modulus)) + 2.0 * modulus
    return float(np.exp(special.logsumexp(log_w[truncation:]) - log_total))


def pair_coherent_truncation(modulus: float, tolerance: float = PAIR_COHERENT_TAIL_TOLERANCE) -> int:
    truncation = 1
    while pair_coherent_tail(modulus, truncation) >= tolerance:
        truncation += 1
    return truncation


@dataclass(frozen=True, slots=True)
class PairCoherentSpec:
    """
    Two-mode eigenstate of the product lowering operator ab with eigenvalue zeta.

    Number-basis coefficients are proportional to zeta^n / n! on |n, n>.
    ``truncation`` defaults to the smallest cutoff leaving < 1e-10 behind.
    """

    kind: ClassVar[str] = "pair-coherent"

    zeta: complex = 1.1
    truncation: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "zeta", complex(self.zeta))
        if not (math.isfinite(self.zeta.real) and math.isfinite(self.zeta.imag)):
            raise StateValidationError("zeta", "must be finite")
        modulus = abs(self.zeta)
        if self.truncation is None:
            object.__setattr__(self, "truncation", pair_coherent_truncation(modulus))
            return
        if int(self.truncation) != self.truncation or self.truncation < 1:
            raise StateValidationError("truncation", "must be a positive integer")
        object.__setattr__(self, "truncation", int(self.truncation))
        tail = pair_coherent_tail(modulus, int(self.truncation))
        if tail >= PAIR_COHERENT_TAIL_TOLERANCE:
            msg = (
                f"truncation {self.truncation} leaves tail probability {tail:.3e} "
                f">= {PAIR_COHERENT_TAIL_TOLERANCE:g} for |zeta|={modulus:g}"
            )
            raise TruncationError(msg)

    def coefficients(self) -> NDArray[np.complex128]:
        """Normalized diagonal coefficients c_n of |n, n>, n < truncation."""
        n = np.arange(self.truncation)
        log_mag = 0.5 * _pair_coherent_log_weights(abs(self.zeta), self.truncation)
        phase = np.exp(1j * n * np.angle(self.zeta))
        coefficients = np.exp(log_mag) * phase
        return coefficients / np.linalg.norm(coefficients)


StatePrep = SuperpositionSpec | MixtureSpec | EPRSpec | PairCoherentSpec


@dataclass(frozen=True, slots=True)
class GaussianMixture1D:
    """Common-variance Gaussian mixture on the real line."""

    weights: tuple[float, ...]
    means: tuple[float, ...]
    variance: float

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def pdf(self, x: ArrayLike) -> FloatOrArray:
        x = _as_array(x)
        total = sum(w * stats.norm.pdf(x, loc=m, scale=self.std) for w, m in zip(self.weights, self.means, strict=True))
        return _unwrap(np.asarray(total, dtype=np.float64))

    def cdf(self, x: ArrayLike) -> FloatOrArray:
        x = _as_array(x)
        total = sum(w * stats.norm.cdf(x, loc=m, scale=self.std) for w, m in zip(self.weights, self.means, strict=True))
        return _unwrap(np.asarray(total, dtype=np.float64))

    def mean(self) -> float:
        return float(np.dot(self.weights, self.means))


def _gain(g: float, t: float) -> float:
    if t < 0:
        raise ConfigurationError("t", f"time must be >= 0 (got {t!r})")
    return math.exp(g * t)


def evolved_variances(r: float, g: float, t: float) -> tuple[float, float]:
    """
    Husimi (x, p) variances of a component squeezed by r after amplifying for t.

    The x-quadrature quantum part grows as G^2 and the p part shrinks as 1/G^2;
    the vacuum unit stays.
    """
    gain = _gain(g, t)
    return 1.0 + gain**2 * math.exp(-2.0 * r), 1.0 + math.exp(2.0 * r) / gain**2


def _two_component_density(
    spec: SuperpositionSpec,
    x: NDArray[np.float64],
    p: NDArray[np.float64],
    g: float,
    t: float,
) -> NDArray[np.float64]:
    gain = _gain(g, t)
    sx2, sp2 = evolved_variances(spec.r, g, t)
    x1, x2 = gain * spec.x1, gain * spec.x2
    c1, c2 = spec.c1, spec.c2_mag
    g1 = np.exp(-((x - x1) ** 2) / (2.0 * sx2))
    g2 = np.exp(-((x - x2) ** 2) / (2.0 * sx2))
    cross = np.exp(-((x - x1) ** 2 + (x - x2) ** 2) / (4.0 * sx2)) * np.sin(p * (x1 - x2) / (2.0 * sx2))
    gauss_p = np.exp(-(p**2) / (2.0 * sp2))
    density = (c1**2 * g1 + c2**2 * g2 - 2.0 * c1 * c2 * cross) * gauss_p
    density /= 2.0 * math.pi * math.sqrt(sx2 * sp2)
    return np.maximum(density, 0.0)


def q_superposition(
    spec: SuperpositionSpec,
    pt: PhasePoint,
    *,
    g: float = 0.0,
    t: float = 0.0,
    measure: Measure = "quadrature",
) -> FloatOrArray:
    """
    Husimi Q of the two-component superposition.

    With t = 0 this is the familiar two-Gaussian-plus-interference form with
    interference factor sin(p (x1 - x2) / (2 sigma_x^2)), which is
    sin(p x1 / sigma_x^2) in the symmetric case. With t > 0 the state has been
    amplified for time t at gain rate g: means become G x_j and the squeezing
    parameter becomes r - g t.
    """
    x, p = _as_array(pt.x_a), _as_array(pt.p_a)
    return _unwrap(measure_factor(measure, 1) * _two_component_density(spec, x, p, g, t))


def q_mixture(
    spec: MixtureSpec,
    pt: PhasePoint,
    *,
    g: float = 0.0,
    t: float = 0.0,
    measure: Measure = "quadrature",
) -> FloatOrArray:
    x, p = _as_array(pt.x_a), _as_array(pt.p_a)
    gain = _gain(g, t)
    sx2, sp2 = evolved_variances(spec.r, g, t)
    density = np.zeros(np.broadcast(x, p).shape)
    for weight, mean in zip(spec.weights, spec.means, strict=True):
        density = density + weight * np.exp(-((x - gain * mean) ** 2) / (2.0 * sx2))
    density = density * np.exp(-(p**2) / (2.0 * sp2)) / (2.0 * math.pi * math.sqrt(sx2 * sp2))
    return _unwrap(measure_factor(measure, 1) * density)


def q_marginal_x_future(spec: SuperpositionSpec | MixtureSpec, g: float, t: float) -> GaussianMixture1D:
    """
    x-marginal of the Husimi Q after amplifying for time t.

    Weights are the Born weights, means G x_j and the common variance
    1 + G^2 (sigma_x^2 - 1).
    """
    gain = _gain(g, t)
    means = tuple(gain * m for m in spec.means)
    variance, _ = evolved_variances(spec.r, g, t)
    return GaussianMixture1D(weights=tuple(spec.weights), means=means, variance=variance)


def q_marginal_p_future(spec: SuperpositionSpec | MixtureSpec, g: float, t: float) -> float:
    """Variance of the (zero-mean Gaussian) p-marginal after amplifying for time t."""
    _, variance = evolved_variances(spec.r, g, t)
    return variance


def interference_visibility(spec: SuperpositionSpec, x: ArrayLike) -> FloatOrArray:
    """
    Fringe visibility of Q(p | x) implied by the joint superposition density.

    Equals 2 c1 |c2| / (c1^2 e^-d + |c2|^2 e^d) with d the log-ratio of the two
    x-Gaussians, which is 1/cosh(x x1 / sigma_x^2) for the symmetric
    equal-weight state. Bounded by 1 in magnitude.
    """
    x = _as_array(x)
    c1, c2 = spec.c1, spec.c2_mag
    if c1 == 0 or c2 == 0:
        return _unwrap(np.zeros_like(x))
    d = ((x - spec.x1) ** 2 - (x - spec.x2) ** 2) / (4.0 * spec.sigma_x2)
    log_denominator = np.logaddexp(2.0 * math.log(abs(c1)) - d, 2.0 * math.log(c2) + d)
    visibility = math.copysign(1.0, c1) * np.exp(math.log(2.0 * abs(c1) * c2) - log_denominator)
    return _unwrap(visibility)


def conditional_bracket(
    spec: SuperpositionSpec,
    p: ArrayLike,
    x: ArrayLike,
    *,
    form: ConditionalForm = ConditionalForm.PRINTED,
) -> FloatOrArray:
    """The non-Gaussian factor of Q(p | x); always within [0, 2]."""
    p, x = _as_array(p), _as_array(x)
    sx2 = spec.sigma_x2
    if ConditionalForm(form) is ConditionalForm.PRINTED:
        with np.errstate(over="ignore"):
            damping = 1.0 / np.cosh(2.0 * x * spec.x1 / sx2)
        bracket = 1.0 - np.sin(2.0 * p * spec.x1 / sx2) * damping
    else:
        visibility = _as_array(interference_visibility(spec, x))
        bracket = 1.0 - visibility * np.sin(p * (spec.x1 - spec.x2) / (2.0 * sx2))
    return _unwrap(np.clip(bracket, 0.0, 2.0))


def q_conditional_p_given_x(
    spec: SuperpositionSpec,
    p: ArrayLike,
    x: ArrayLike,
    *,
    form: ConditionalForm = ConditionalForm.PRINTED,
) -> FloatOrArray:
    """
    Q(p | x): a zero-mean Gaussian of variance sigma_p^2 times a bracket.

    The printed form uses 1 - sin(2 p x1 / sigma_x^2) / cosh(2 x x1 / sigma_x^2).
    Both forms are normalized over p for each fixed x because the sine is odd.
    """
    p_arr = _as_array(p)
    gauss = stats.norm.pdf(p_arr, scale=math.sqrt(spec.sigma_p2))
    bracket = _as_array(conditional_bracket(spec, p_arr, x, form=form))
    return _unwrap(gauss * bracket)


def fringe_period(spec: SuperpositionSpec, form: ConditionalForm = ConditionalForm.PRINTED) -> float:
    """Period in p of the conditional fringes."""
    if ConditionalForm(form) is ConditionalForm.PRINTED:
        return math.pi * spec.sigma_x2 / abs(spec.x1)
    return 4.0 * math.pi * spec.sigma_x2 / abs(spec.x1 - spec.x2)


def q_epr(spec: EPRSpec, pt: PhasePoint, *, measure: Measure = "alpha") -> FloatOrArray:
    """
    Husimi Q of the two-mode squeezed vacuum.

    Per d²alpha d²beta this is (1 - eta^2)/pi^2 times
    exp(-|alpha|^2 - |beta|^2 + eta (alpha beta + c.c.)), which factorizes into
    a function of (x+, x-) times a function of (p+, p-).
    """
    eta = spec.eta
    x_a, p_a = _as_array(pt.x_a), _as_array(pt.p_a)
    x_b, p_b = _as_array(pt.x_b), _as_array(pt.p_b)
    exponent = -(x_a**2 + p_a**2 + x_b**2 + p_b**2) / 4.0 + eta * (x_a * x_b - p_a * p_b) / 2.0
    density = (1.0 - eta**2) / math.pi**2 * np.exp(exponent)
    return _unwrap(density * measure_factor(measure, 2) / 16.0)


@dataclass(frozen=True, slots=True)
class EPRBoundary:
    """
    Independent zero-mean Gaussians for the sum and difference of one quadrature.

    ``sum_variance`` is Var(q_A + q_B), ``difference_variance`` is
    Var(q_A - q_B), in quadrature units.
    """

    quadrature: str
    sum_variance: float
    difference_variance: float
    gain: float

    def covariance(self) -> NDArray[np.float64]:
        """Covariance matrix of (q_A, q_B)."""
        diagonal = (self.sum_variance + self.difference_variance) / 4.0
        off_diagonal = (self.sum_variance - self.difference_variance) / 4.0
        return np.array([[diagonal, off_diagonal], [off_diagonal, diagonal]])

    @property
    def correlation(self) -> float:
        return (self.sum_variance - self.difference_variance) / (self.sum_variance + self.difference_variance)

    def in_amplitude_units(self) -> tuple[float, float]:
        """(sum, difference) variances in alpha = x + ip units, a factor 4 smaller."""
        return self.sum_variance / 4.0, self.difference_variance / 4.0


def q_epr_boundary(spec: EPRSpec, g: float, t: float, quadrature: str = "x") -> EPRBoundary:
    """
    Future-boundary law of the amplified EPR quadratures.

    For the x setting Var(x+-) = 2 (1 + e^{2gt} e^{+-2r}); for the p setting
    the roles swap: p+ carries e^{-2r} and p- carries e^{+2r}.
    """
    gain = _gain(g, t)
    squeezed = 2.0 * (1.0 + gain**2 * math.exp(-2.0 * spec.r))
    stretched = 2.0 * (1.0 + gain**2 * math.exp(2.0 * spec.r))
    if quadrature == "x":
        return EPRBoundary("x", sum_variance=stretched, difference_variance=squeezed, gain=gain)
    if quadrature == "p":
        return EPRBoundary("p", sum_variance=squeezed, difference_variance=stretched, gain=gain)
    raise ConfigurationError("quadrature", f"expected 'x' or 'p' (got {quadrature!r})")


def q_pair_coherent(spec: PairCoherentSpec, pt: PhasePoint, *, measure: Measure = "alpha") -> FloatOrArray:
    """
    Husimi Q of the pair-coherent state from its truncated coherent-overlap series.

    <alpha, beta|psi> = N exp(-(|alpha|^2 + |beta|^2)/2) sum (zeta a* b*)^n / (n!)^2.
    """
    alpha, beta = pt.alpha(), pt.beta()
    w = spec.zeta * np.conj(alpha) * np.conj(beta)
    log_mag = 0.5 * _pair_coherent_log_weights(abs(spec.zeta), spec.truncation)
    norm = 1.0 / math.sqrt(float(np.exp(special.logsumexp(2.0 * log_mag))))
    term = np.ones_like(w)
    series = np.ones_like(w)
    for n in range(1, spec.truncation):
        term = term * w / n**2
        series = series + term
    amplitude = norm * np.exp(-(np.abs(alpha) ** 2 + np.abs(beta) ** 2) / 2.0) * series
    density = np.abs(amplitude) ** 2 / math.pi**2
    return _unwrap(density * measure_factor(measure, 2) / 16.0)


def rotate(pt: PhasePoint, theta: float, phi: float) -> PhasePoint:
    """Rotate mode A by theta and mode B by phi: x_theta = x cos(theta) + p sin(theta)."""
    x_a, p_a = _as_array(pt.x_a), _as_array(pt.p_a)
    x_b, p_b = _as_array(pt.x_b), _as_array(pt.p_b)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    cos_f, sin_f = math.cos(phi), math.sin(phi)
    return PhasePoint(
        x_a=_unwrap(x_a * cos_t + p_a * sin_t),
        p_a=_unwrap(-x_a * sin_t + p_a * cos_t),
        x_b=_unwrap(x_b * cos_f + p_b * sin_f),
        p_b=_unwrap(-x_b * sin_f + p_b * cos_f),
    )
