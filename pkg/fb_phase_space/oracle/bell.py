"""
Sign-binned correlators and the CHSH combination for two-mode states.

Correlators are integrals of the rotated-quadrature Born density weighted
by the outcome signs. They are evaluated by Gauss-Legendre quadrature on
[0, L] mirrored to [-L, 0], so the sign discontinuity at zero falls on a
panel boundary.
"""

from __future__ import annotations

import itertools
import logging
import math
from collections.abc import Iterable
from dataclasses import asdict
from dataclasses import dataclass

import numpy as np
from django.conf import settings
from numpy.typing import NDArray
from scipy import optimize
from scipy import special

from fb_phase_space.exceptions import ConfigurationError
from fb_phase_space.exceptions import GridCoverageError
from fb_phase_space.oracle.fock import FockState
from fb_phase_space.oracle.fock import build_state
from fb_phase_space.oracle.quadrature import hermite_functions
from fb_phase_space.simulation.states import PairCoherentSpec

logger = logging.getLogger(__name__)

LOCAL_BOUND = 2.0
COVERAGE_TOLERANCE = 1e-8


@dataclass(frozen=True, slots=True)
class CHSHAngles:
    theta: float
    theta_prime: float
    phi: float
    phi_prime: float

    def pairs(self) -> tuple[tuple[float, float], ...]:
        """Setting pairs in CHSH order: (theta, phi), (theta', phi), (theta, phi'), (theta', phi')."""
        return (
            (self.theta, self.phi),
            (self.theta_prime, self.phi),
            (self.theta, self.phi_prime),
            (self.theta_prime, self.phi_prime),
        )


CHSH_SIGNS = (1.0, 1.0, 1.0, -1.0)


def chsh_value(correlators: Iterable[float]) -> float:
    """S = |E(theta,phi) + E(theta',phi) + E(theta,phi') - E(theta',phi')|."""
    return abs(sum(s * e for s, e in zip(CHSH_SIGNS, correlators, strict=True)))


@dataclass(frozen=True, slots=True)
class SignQuadrature:
    nodes: NDArray[np.float64]
    weights: NDArray[np.float64]

    @classmethod
    def mirrored(cls, extent: float, count: int) -> SignQuadrature:
        base, base_weights = np.polynomial.legendre.leggauss(count)
        half = 0.5 * extent * (base + 1.0)
        half_weights = 0.5 * extent * base_weights
        nodes = np.concatenate([-half[::-1], half])
        return cls(nodes=nodes, weights=np.concatenate([half_weights[::-1], half_weights]))

    def outcome(self, gain: float | None) -> NDArray[np.float64]:
        """Expected outcome sign at each node: sign(u), or E[sign(G u + N(0, 1))] = erf(G u / sqrt 2)."""
        if gain is None:
            return np.sign(self.nodes)
        return special.erf(gain * self.nodes / math.sqrt(2.0))


def _default_quadrature() -> SignQuadrature:
    return SignQuadrature.mirrored(
        getattr(settings, "ORACLE_GRID_EXTENT", 8.0),
        getattr(settings, "ORACLE_QUADRATURE_NODES", 96),
    )


def _wavefunction(state: FockState, theta: float, phi: float, quad: SignQuadrature) -> NDArray[np.complex128]:
    n = np.arange(state.cutoff)
    hermite = hermite_functions(state.cutoff, quad.nodes)
    basis_a = np.exp(-1j * theta * n)[:, None] * hermite
    basis_b = np.exp(-1j * phi * n)[:, None] * hermite
    return basis_a.T @ state.coefficients @ basis_b


def sign_correlation(
    state: FockState,
    theta: float,
    phi: float,
    *,
    gain: float | None = None,
    quadrature: SignQuadrature | None = None,
) -> float:
    """
    E(theta, phi) = P(++) + P(--) - P(+-) - P(-+) of the sign-binned rotated quadratures.

    With ``gain`` the outcome is the sign of G u + N(0, 1) instead of u.
    """
    if state.modes != 2:
        raise ConfigurationError("state", "sign correlators need a two-mode state")
    quad = quadrature or _default_quadrature()
    density = np.abs(_wavefunction(state, theta, phi, quad)) ** 2
    weighted = density * np.outer(quad.weights, quad.weights)
    mass = float(weighted.sum())
    if abs(1.0 - mass) > COVERAGE_TOLERANCE:
        raise GridCoverageError(f"quadrature holds mass {mass:.10f} at settings ({theta:g}, {phi:g})")
    signs = quad.outcome(gain)
    return float(signs @ weighted @ signs / mass)


def correlation_table(
    state: FockState,
    thetas: NDArray[np.float64],
    phis: NDArray[np.float64],
    *,
    gain: float | None = None,
    quadrature: SignQuadrature | None = None,
) -> NDArray[np.float64]:
    """E over a grid of settings, shape (len(thetas), len(phis))."""
    quad = quadrature or _default_quadrature()
    return np.array([[sign_correlation(state, t, p, gain=gain, quadrature=quad) for p in phis] for t in thetas])


@dataclass(frozen=True, slots=True)
class CHSHReference:
    zeta: complex
    angles: CHSHAngles
    correlators: tuple[float, float, float, float]
    s_value: float
    gain: float | None

    @property
    def violates(self) -> bool:
        return self.s_value > LOCAL_BOUND

    def as_dict(self) -> dict:
        return {
            "zeta": [self.zeta.real, self.zeta.imag],
            "angles": asdict(self.angles),
            "correlators": list(self.correlators),
            "s_value": self.s_value,
            "gain": self.gain,
            "violates": self.violates,
        }


def chsh_reference(
    spec: PairCoherentSpec,
    angles: CHSHAngles,
    *,
    gain: float | None = None,
    quadrature: SignQuadrature | None = None,
) -> CHSHReference:
    """Exact correlators at the four CHSH setting pairs and the resulting S."""
    state = build_state(spec)
    quad = quadrature or _default_quadrature()
    correlators = tuple(sign_correlation(state, t, p, gain=gain, quadrature=quad) for t, p in angles.pairs())
    return CHSHReference(
        zeta=spec.zeta,
        angles=angles,
        correlators=correlators,
        s_value=chsh_value(correlators),
        gain=gain,
    )


def _chsh_grid(table: NDArray[np.float64]) -> NDArray[np.float64]:
    """S for every (theta, theta', phi, phi') index quadruple of a correlator table."""
    e_tp = table[:, None, :, None]
    e_t2p = table[None, :, :, None]
    e_tp2 = table[:, None, None, :]
    e_t2p2 = table[None, :, None, :]
    return np.abs(e_tp + e_t2p + e_tp2 - e_t2p2)


@dataclass(frozen=True, slots=True)
class CHSHSearchResult:
    best: CHSHReference
    scanned: tuple[tuple[float, float], ...]
    angle_steps: int

    def as_dict(self) -> dict:
        return {
            "best": self.best.as_dict(),
            "scanned": [{"zeta": z, "s_max": s} for z, s in self.scanned],
            "angle_steps": self.angle_steps,
        }


def _refine(state: FockState, start: CHSHAngles, gain: float | None, quad: SignQuadrature) -> CHSHAngles:
    def objective(v: NDArray[np.float64]) -> float:
        pairs = CHSHAngles(*v).pairs()
        return -chsh_value(sign_correlation(state, t, p, gain=gain, quadrature=quad) for t, p in pairs)

    x0 = np.array([start.theta, start.theta_prime, start.phi, start.phi_prime])
    result = optimize.minimize(objective, x0, method="Nelder-Mead", options={"xatol": 1e-6, "fatol": 1e-10})
    if -result.fun <= -objective(x0):
        return start
    return CHSHAngles(*(float(v) for v in np.mod(result.x, 2.0 * math.pi)))


def search_chsh_optimum(
    zetas: Iterable[float],
    *,
    angle_steps: int = 24,
    gain: float | None = None,
    refine: bool = True,
    quadrature: SignQuadrature | None = None,
) -> CHSHSearchResult:
    """
    Grid search of S over real zeta and the four setting angles on [0, 2 pi).

    The correlator table of each zeta is computed once; S over all angle
    quadruples is then a broadcast. The best grid point is optionally polished
    with Nelder-Mead.
    """
    if angle_steps < 2:
        raise ConfigurationError("angle_steps", "must be >= 2")
    quad = quadrature or _default_quadrature()
    grid = 2.0 * math.pi * np.arange(angle_steps) / angle_steps
    best: tuple[float, float, tuple[int, ...]] | None = None
    scanned = []
    for zeta in zetas:
        table = correlation_table(build_state(PairCoherentSpec(zeta=zeta)), grid, grid, gain=gain, quadrature=quad)
        s_grid = _chsh_grid(table)
        index = np.unravel_index(int(np.argmax(s_grid)), s_grid.shape)
        s_max = float(s_grid[index])
        scanned.append((float(zeta), s_max))
        logger.info("zeta=%.3f: max S on the angle grid %.6f", zeta, s_max)
        if best is None or s_max > best[1]:
            best = (float(zeta), s_max, tuple(int(i) for i in index))
    if best is None:
        raise ConfigurationError("zetas", "need at least one zeta value")
    zeta, _, (i, i_prime, j, j_prime) = best
    angles = CHSHAngles(grid[i], grid[i_prime], grid[j], grid[j_prime])
    spec = PairCoherentSpec(zeta=zeta)
    if refine:
        angles = _refine(build_state(spec), angles, gain, quad)
    reference = chsh_reference(spec, angles, gain=gain, quadrature=quad)
    return CHSHSearchResult(best=reference, scanned=tuple(scanned), angle_steps=angle_steps)


def phase_shift_pairs(theta: float, phi: float, shifts: Iterable[float]) -> list[tuple[float, float]]:
    """Setting pairs with the same theta + phi, which pair-coherent correlators cannot tell apart."""
    return [(theta + s, phi - s) for s in itertools.chain([0.0], shifts)]
