"""
Born distributions of rotated quadratures, tabulated on a cell-centred grid.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from django.conf import settings
from numpy.typing import ArrayLike
from numpy.typing import NDArray

from fb_phase_space.exceptions import ConfigurationError
from fb_phase_space.exceptions import GridCoverageError
from fb_phase_space.oracle.fock import FockMixture
from fb_phase_space.oracle.fock import FockState

logger = logging.getLogger(__name__)

MASS_TOLERANCE = 1e-8


@dataclass(frozen=True, slots=True)
class QuadratureGrid:
    extent: float = 8.0
    points: int = 512

    def __post_init__(self):
        if not (math.isfinite(self.extent) and self.extent > 0):
            raise ConfigurationError("extent", f"must be > 0 (got {self.extent!r})")
        if self.points < 2:
            raise ConfigurationError("points", f"must be >= 2 (got {self.points!r})")

    @classmethod
    def from_settings(cls) -> QuadratureGrid:
        return cls(
            extent=getattr(settings, "ORACLE_GRID_EXTENT", 8.0),
            points=getattr(settings, "ORACLE_GRID_POINTS", 512),
        )

    @property
    def spacing(self) -> float:
        return 2.0 * self.extent / self.points

    @property
    def axis(self) -> NDArray[np.float64]:
        return -self.extent + self.spacing * (np.arange(self.points) + 0.5)


def hermite_functions(n_max: int, u: ArrayLike) -> NDArray[np.float64]:
    """
    Number-state wavefunctions <u|n> in x = a + a† units, shape (n_max, len(u)).

    Built by the stable three-term recursion for the normalized oscillator
    functions of y = u / sqrt(2), rescaled so each integrates to one over du.
    """
    y = np.atleast_1d(np.asarray(u, dtype=np.float64)) / math.sqrt(2.0)
    out = np.zeros((n_max, y.size))
    if n_max == 0:
        return out
    out[0] = math.pi**-0.25 * np.exp(-(y**2) / 2.0)
    if n_max > 1:
        out[1] = math.sqrt(2.0) * y * out[0]
    for n in range(2, n_max):
        out[n] = math.sqrt(2.0 / n) * y * out[n - 1] - math.sqrt((n - 1) / n) * out[n - 2]
    return out * 2.0**-0.25


def _rotated_basis(cutoff: int, theta: float, grid: QuadratureGrid) -> NDArray[np.complex128]:
    phases = np.exp(-1j * theta * np.arange(cutoff))
    return phases[:, None] * hermite_functions(cutoff, grid.axis)


@dataclass(frozen=True, eq=False)
class QuadraturePDF:
    """Born density of (x_theta_A[, x_phi_B]) at the grid cell centres."""

    grid: QuadratureGrid
    density: NDArray[np.float64]
    modes: int

    @cached_property
    def cell_probabilities(self) -> NDArray[np.float64]:
        probabilities = self.density * self.grid.spacing**self.modes
        return probabilities / probabilities.sum()

    def marginals(self) -> tuple[NDArray[np.float64], ...]:
        """Per-mode marginal densities on the grid axis."""
        if self.modes == 1:
            return (self.density,)
        step = self.grid.spacing
        return self.density.sum(axis=1) * step, self.density.sum(axis=0) * step

    def expectation(self, values: ArrayLike) -> float:
        """Grid expectation of a function tabulated on the same cells."""
        return float(np.sum(np.asarray(values) * self.cell_probabilities))


def _pure_density(state: FockState, angles: Sequence[float], grid: QuadratureGrid) -> NDArray[np.float64]:
    basis_a = _rotated_basis(state.cutoff, angles[0], grid)
    if state.modes == 1:
        return np.abs(basis_a.T @ state.coefficients) ** 2
    basis_b = _rotated_basis(state.cutoff, angles[1], grid)
    return np.abs(basis_a.T @ state.coefficients @ basis_b) ** 2


def quadrature_pdf(
    state: FockState | FockMixture,
    angles: float | Sequence[float],
    grid: QuadratureGrid | None = None,
) -> QuadraturePDF:
    """
    Born density of the rotated quadratures, psi(u, v) = sum C_nm e^{-i(n theta + m phi)} h_n(u) h_m(v).

    Raises ``GridCoverageError`` when the grid misses more than 1e-8 of the
    probability; otherwise the tabulated density is renormalized.
    """
    grid = grid or QuadratureGrid.from_settings()
    angles = (float(angles),) if np.isscalar(angles) else tuple(float(a) for a in angles)
    if len(angles) != state.modes:
        raise ConfigurationError("angles", f"need one angle per mode ({state.modes})")
    if isinstance(state, FockMixture):
        density = sum(w * _pure_density(c, angles, grid) for w, c in zip(state.weights, state.components, strict=True))
    else:
        density = _pure_density(state, angles, grid)
    mass = float(density.sum()) * grid.spacing**state.modes
    if abs(1.0 - mass) > MASS_TOLERANCE:
        msg = f"grid [-{grid.extent}, {grid.extent}] with {grid.points} points holds mass {mass:.10f}"
        raise GridCoverageError(msg)
    logger.debug("Quadrature grid mass deficit %.2e", 1.0 - mass)
    return QuadraturePDF(grid=grid, density=density / mass, modes=state.modes)


class BornSampler:
    """Inverse-CDF sampler over grid cells with uniform jitter inside the chosen cell."""

    def __init__(self, pdf: QuadraturePDF):
        self.pdf = pdf
        self._cumulative = np.cumsum(pdf.cell_probabilities.ravel())

    def sample(self, n: int, rng: np.random.Generator) -> NDArray[np.float64]:
        """Draw ``n`` points, shape (n, modes)."""
        grid = self.pdf.grid
        cells = np.searchsorted(self._cumulative, rng.uniform(size=n) * self._cumulative[-1], side="right")
        cells = np.minimum(cells, self._cumulative.size - 1)
        indices = np.unravel_index(cells, self.pdf.density.shape)
        jitter = rng.uniform(-0.5, 0.5, size=(n, self.pdf.modes)) * grid.spacing
        return np.column_stack([grid.axis[i] for i in indices]) + jitter
