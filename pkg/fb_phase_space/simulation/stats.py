"""
Estimators and goodness-of-fit tests used by the experiments and the
acceptance gates.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike
from numpy.typing import NDArray
from scipy import optimize
from scipy import stats

from fb_phase_space.exceptions import ConfigurationError
from fb_phase_space.exceptions import DegenerateBinningError
from fb_phase_space.exceptions import FringeFitError
from fb_phase_space.exceptions import InsufficientSamplesError

logger = logging.getLogger(__name__)

KS_MIN_SAMPLES = 10
CHI2_MIN_EXPECTED = 5.0
FRINGE_MIN_BINS = 20
BIN_QUADRATURE_NODES = 8


def _finite_sample(values: ArrayLike, name: str, minimum: int) -> NDArray[np.float64]:
    sample = np.asarray(values, dtype=np.float64).ravel()
    if sample.size < minimum:
        raise InsufficientSamplesError(f"{name} needs at least {minimum} samples (got {sample.size})")
    return sample


@dataclass(frozen=True, slots=True)
class GoodnessOfFit:
    statistic: float
    p_value: float
    dof: int | None = None

    def passes(self, alpha: float = 0.01) -> bool:
        return self.p_value > alpha


@dataclass(frozen=True, slots=True)
class Histogram:
    """
    Counts on fixed edges. ``overflow`` counts samples outside the edges,
    which ``total`` excludes.
    """

    edges: tuple[NDArray[np.float64], ...]
    counts: NDArray[np.int64]
    overflow: int = 0

    def __post_init__(self):
        if len(self.edges) not in (1, 2) or self.counts.ndim != len(self.edges):
            raise ConfigurationError("edges", "histograms are one- or two-dimensional")
        for axis, edge in enumerate(self.edges):
            if edge.size != self.counts.shape[axis] + 1 or np.any(np.diff(edge) <= 0):
                raise ConfigurationError("edges", "bin edges must be strictly increasing and match the counts")

    @property
    def dimensionality(self) -> int:
        return len(self.edges)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def n_samples(self) -> int:
        return self.total + self.overflow

    def centres(self) -> tuple[NDArray[np.float64], ...]:
        return tuple(0.5 * (e[1:] + e[:-1]) for e in self.edges)

    def density(self) -> NDArray[np.float64]:
        """Counts per unit length (area) normalized by all samples, overflow included."""
        widths = [np.diff(e) for e in self.edges]
        area = widths[0] if self.dimensionality == 1 else np.outer(widths[0], widths[1])
        return self.counts / (max(self.n_samples, 1) * area)

    @classmethod
    def from_samples_1d(cls, values: ArrayLike, bins: int, value_range: tuple[float, float]) -> Histogram:
        values = np.asarray(values, dtype=np.float64).ravel()
        counts, edges = np.histogram(values, bins=bins, range=value_range)
        return cls(edges=(edges,), counts=counts.astype(np.int64), overflow=int(values.size - counts.sum()))

    @classmethod
    def from_samples_2d(
        cls,
        x: ArrayLike,
        p: ArrayLike,
        bins: int | tuple[int, int],
        box: tuple[tuple[float, float], tuple[float, float]],
    ) -> Histogram:
        x = np.asarray(x, dtype=np.float64).ravel()
        p = np.asarray(p, dtype=np.float64).ravel()
        counts, x_edges, p_edges = np.histogram2d(x, p, bins=bins, range=box)
        counts = counts.astype(np.int64)
        return cls(edges=(x_edges, p_edges), counts=counts, overflow=int(x.size - counts.sum()))

    def as_dict(self) -> dict:
        return {
            "edges": [e.tolist() for e in self.edges],
            "counts": self.counts.tolist(),
            "overflow": self.overflow,
        }


def ks_test(sample_a: ArrayLike, sample_b_or_cdf: ArrayLike | Callable) -> GoodnessOfFit:
    """One-sample KS against a CDF, or two-sample KS, with asymptotic p-values."""
    a = _finite_sample(sample_a, "ks_test", KS_MIN_SAMPLES)
    if callable(sample_b_or_cdf):
        result = stats.kstest(a, sample_b_or_cdf, method="asymp")
    else:
        b = _finite_sample(sample_b_or_cdf, "ks_test", KS_MIN_SAMPLES)
        result = stats.ks_2samp(a, b, method="asymp")
    return GoodnessOfFit(statistic=float(result.statistic), p_value=float(result.pvalue))


def bin_probabilities(
    edges: tuple[NDArray[np.float64], NDArray[np.float64]],
    density: Callable[[NDArray[np.float64], NDArray[np.float64]], ArrayLike],
    nodes: int = BIN_QUADRATURE_NODES,
) -> NDArray[np.float64]:
    """Integral of a 2D density over every bin by tensor Gauss-Legendre per bin."""
    base, weights = np.polynomial.legendre.leggauss(nodes)
    per_axis = []
    for edge in edges:
        half = 0.5 * np.diff(edge)
        mid = 0.5 * (edge[1:] + edge[:-1])
        points = mid[:, None] + half[:, None] * base[None, :]
        per_axis.append((points, half[:, None] * weights[None, :]))
    (x_pts, x_w), (p_pts, p_w) = per_axis
    values = np.asarray(density(x_pts.ravel()[:, None], p_pts.ravel()[None, :]), dtype=np.float64)
    values = values.reshape(x_pts.shape[0], nodes, p_pts.shape[0], nodes)
    return np.einsum("aibj,ai,bj->ab", values, x_w, p_w)


def chi2_2d(
    hist: Histogram,
    reference: Callable[[NDArray[np.float64], NDArray[np.float64]], ArrayLike],
    *,
    nodes: int = BIN_QUADRATURE_NODES,
) -> GoodnessOfFit:
    """
    Pearson chi-square of a 2D histogram against a reference density (per unit area).

    Bins expected to hold fewer than 5 counts are pooled with the overflow
    cell; a pooled cell that is still below 5 joins the smallest retained bin.
    """
    if hist.dimensionality != 2:
        raise ConfigurationError("hist", "chi2_2d needs a two-dimensional histogram")
    n = hist.n_samples
    probabilities = bin_probabilities(hist.edges, reference, nodes)
    expected = n * probabilities.ravel()
    observed = hist.counts.ravel().astype(np.float64)
    keep = expected >= CHI2_MIN_EXPECTED
    exp_cells = list(expected[keep])
    obs_cells = list(observed[keep])
    pooled_expected = float(expected[~keep].sum()) + max(0.0, n * (1.0 - float(probabilities.sum())))
    pooled_observed = float(observed[~keep].sum()) + hist.overflow
    if pooled_expected >= CHI2_MIN_EXPECTED:
        exp_cells.append(pooled_expected)
        obs_cells.append(pooled_observed)
    elif exp_cells and (pooled_expected > 0 or pooled_observed > 0):
        smallest = int(np.argmin(exp_cells))
        exp_cells[smallest] += pooled_expected
        obs_cells[smallest] += pooled_observed
    dof = len(exp_cells) - 1
    if dof < 1:
        raise DegenerateBinningError(f"only {len(exp_cells)} cell(s) left after pooling; no degrees of freedom")
    exp_arr, obs_arr = np.asarray(exp_cells), np.asarray(obs_cells)
    statistic = float(np.sum((obs_arr - exp_arr) ** 2 / exp_arr))
    return GoodnessOfFit(statistic=statistic, p_value=float(stats.chi2.sf(statistic, dof)), dof=dof)


@dataclass(frozen=True, slots=True)
class CHSHEstimate:
    correlators: tuple[float, float, float, float]
    standard_errors: tuple[float, float, float, float]
    s_value: float
    s_error: float
    n_per_pair: tuple[int, int, int, int]

    def as_dict(self) -> dict:
        return {
            "correlators": list(self.correlators),
            "standard_errors": list(self.standard_errors),
            "s_value": self.s_value,
            "s_error": self.s_error,
            "n_per_pair": list(self.n_per_pair),
        }


def chsh(sign_pairs: Sequence[tuple[ArrayLike, ArrayLike]]) -> CHSHEstimate:
    """
    E = mean(a b) for each of the four setting pairs, in the order
    (theta, phi), (theta', phi), (theta, phi'), (theta', phi'), and
    S = |E1 + E2 + E3 - E4| with binomial standard errors sqrt((1 - E^2)/n).
    """
    if len(sign_pairs) != 4:
        raise ConfigurationError("sign_pairs", f"need four setting pairs (got {len(sign_pairs)})")
    correlators, errors, counts = [], [], []
    for signs_a, signs_b in sign_pairs:
        a = np.asarray(signs_a, dtype=np.float64).ravel()
        b = np.asarray(signs_b, dtype=np.float64).ravel()
        if a.size == 0 or a.size != b.size:
            raise InsufficientSamplesError("each setting pair needs equal, non-zero numbers of signs")
        if not (np.all(np.abs(a) == 1) and np.all(np.abs(b) == 1)):
            raise ConfigurationError("signs", "outcomes must be +1 or -1")
        e = float(np.mean(a * b))
        correlators.append(e)
        errors.append(math.sqrt(max(0.0, 1.0 - e**2) / a.size))
        counts.append(int(a.size))
    s_value = abs(correlators[0] + correlators[1] + correlators[2] - correlators[3])
    return CHSHEstimate(
        correlators=tuple(correlators),
        standard_errors=tuple(errors),
        s_value=s_value,
        s_error=math.sqrt(sum(se**2 for se in errors)),
        n_per_pair=tuple(counts),
    )


@dataclass(frozen=True, slots=True)
class EPRInference:
    variance_x: float
    variance_p: float
    product: float
    optimal_variance_x: float
    optimal_variance_p: float
    n: int

    @property
    def paradox(self) -> bool:
        return self.product < 1.0

    def as_dict(self) -> dict:
        return {
            "variance_x": self.variance_x,
            "variance_p": self.variance_p,
            "product": self.product,
            "optimal_variance_x": self.optimal_variance_x,
            "optimal_variance_p": self.optimal_variance_p,
            "optimal_product": self.optimal_variance_x * self.optimal_variance_p,
            "paradox": self.paradox,
            "n": self.n,
        }


def _optimal_inference(target: NDArray[np.float64], witness: NDArray[np.float64]) -> float:
    """Smallest Var(target - k witness) over k."""
    covariance = np.cov(target, witness)
    if covariance[1, 1] == 0:
        return float(covariance[0, 0])
    return float(covariance[0, 0] - covariance[0, 1] ** 2 / covariance[1, 1])


def epr_inference(
    x_pairs: tuple[ArrayLike, ArrayLike],
    p_pairs: tuple[ArrayLike, ArrayLike],
    gain: float | None = None,
) -> EPRInference:
    """
    Inference variances Var(x_A - x_B) and Var(p_A + p_B) of paired readouts.

    With ``gain`` the inputs are raw amplitudes at t_f and are scaled by 1/G first.
    """
    scale = 1.0 if gain is None else 1.0 / gain
    x_a, x_b = (_finite_sample(v, "epr_inference", 2) * scale for v in x_pairs)
    p_a, p_b = (_finite_sample(v, "epr_inference", 2) * scale for v in p_pairs)
    if x_a.size != x_b.size or p_a.size != p_b.size:
        raise ConfigurationError("pairs", "paired samples must have equal length")
    variance_x = float(np.var(x_a - x_b, ddof=1))
    variance_p = float(np.var(p_a + p_b, ddof=1))
    return EPRInference(
        variance_x=variance_x,
        variance_p=variance_p,
        product=variance_x * variance_p,
        optimal_variance_x=_optimal_inference(x_a, x_b),
        optimal_variance_p=_optimal_inference(p_a, p_b),
        n=int(min(x_a.size, p_a.size)),
    )


@dataclass(frozen=True, slots=True)
class FringeFit:
    period: float
    visibility: float
    phase: float
    width: float
    residual: float
    period_error: float
    visibility_error: float

    def as_dict(self) -> dict:
        return {
            "period": self.period,
            "visibility": self.visibility,
            "phase": self.phase,
            "width": self.width,
            "residual": self.residual,
            "period_error": self.period_error,
            "visibility_error": self.visibility_error,
        }


def fringe_model(p: ArrayLike, amplitude: float, width: float, visibility: float, period: float, phase: float):
    p = np.asarray(p, dtype=np.float64)
    envelope = amplitude * np.exp(-(p**2) / (2.0 * width**2))
    return envelope * (1.0 - visibility * np.sin(2.0 * np.pi * p / period + phase))


def fringe_fit(hist: Histogram, period_guess: float) -> FringeFit:
    """
    Least-squares fit of a zero-mean Gaussian envelope times 1 - V sin(2 pi p / T + phase).

    The returned visibility is non-negative; a negative fitted V is folded
    into the phase.
    """
    if hist.dimensionality != 1 or hist.counts.size < FRINGE_MIN_BINS:
        msg = f"fringe fit needs a 1D histogram with at least {FRINGE_MIN_BINS} bins"
        raise InsufficientSamplesError(msg)
    edges = hist.edges[0]
    if (edges[-1] - edges[0]) < 2.0 * period_guess:
        msg = "histogram must span at least two expected periods"
        raise InsufficientSamplesError(msg)
    if hist.total == 0:
        msg = "fringe fit needs a non-empty histogram"
        raise InsufficientSamplesError(msg)
    centres = hist.centres()[0]
    density = hist.density()
    counts = hist.counts
    sigma = np.sqrt(np.maximum(counts, 1)) / (max(hist.n_samples, 1) * np.diff(edges))
    weights = density.sum()
    mean = float(np.sum(centres * density) / weights)
    spread = float(np.sqrt(np.sum((centres - mean) ** 2 * density) / weights)) or 1.0
    p0 = [float(density.max()), spread, 0.5, period_guess, 0.0]
    bounds = ([0.0, 1e-6, -1.0, 0.25 * period_guess, -np.pi], [np.inf, np.inf, 1.0, 4.0 * period_guess, np.pi])
    try:
        params, covariance = optimize.curve_fit(
            fringe_model, centres, density, p0=p0, sigma=sigma, bounds=bounds, maxfev=20000
        )
    except (RuntimeError, ValueError) as e:
        raise FringeFitError(f"fringe fit did not converge: {e}") from e
    amplitude, width, visibility, period, phase = (float(v) for v in params)
    if visibility < 0:
        visibility = -visibility
        phase = (phase + 2.0 * np.pi) % (2.0 * np.pi) - np.pi
    errors = np.sqrt(np.clip(np.diag(covariance), 0.0, None))
    residual = float(np.sum(((density - fringe_model(centres, *params)) / sigma) ** 2) / max(len(centres) - 5, 1))
    return FringeFit(
        period=period,
        visibility=visibility,
        phase=phase,
        width=width,
        residual=residual,
        period_error=float(errors[3]),
        visibility_error=float(errors[2]),
    )


def proportion(count: int, n: int) -> tuple[float, float]:
    """Fraction and its binomial standard error."""
    if n < 1:
        raise InsufficientSamplesError("a proportion needs at least one trial")
    fraction = count / n
    return fraction, math.sqrt(fraction * (1.0 - fraction) / n)


def bootstrap_standard_error(
    samples: ArrayLike,
    estimator: Callable[[NDArray[np.float64]], float],
    rng: np.random.Generator,
    n_boot: int = 200,
) -> float:
    """Bootstrap standard error of ``estimator`` over resamples of the leading axis."""
    data = np.asarray(samples)
    if data.shape[0] < 2:
        raise InsufficientSamplesError("bootstrap needs at least two samples")
    estimates = np.empty(n_boot)
    for k in range(n_boot):
        estimates[k] = estimator(data[rng.integers(0, data.shape[0], data.shape[0])])
    return float(np.std(estimates, ddof=1))
