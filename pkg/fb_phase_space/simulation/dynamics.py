"""
Time grids and integrators for the amplified (backward) and attenuated
(forward) Ornstein-Uhlenbeck processes.

Both processes relax at rate g with white noise <xi(t) xi(t')> = 2 D delta(t - t').
The backward process is solved from the future boundary t_f down to t_1 = 0
and stored indexed by ascending physical time, so an ensemble started from
G x_j appears to grow as e^{gt}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import StrEnum

import numpy as np
from numpy.typing import ArrayLike
from numpy.typing import NDArray

from fb_phase_space.exceptions import ConfigurationError

GRID_TOLERANCE = 1e-12
BAND_SEPARATION = 10.0


class Direction(StrEnum):
    FORWARD = "forward"
    BACKWARD = "backward"


class Integrator(StrEnum):
    EXACT = "exact"
    EULER_MARUYAMA = "euler-maruyama"


class NoiseNormalization(StrEnum):
    """
    ``VACUUM`` sets D = g so the stationary level D/g is the unit vacuum
    variance. ``PRINTED`` takes <xi xi'> = (g/2) delta literally, i.e. D = g/4.
    """

    VACUUM = "vacuum"
    PRINTED = "printed"

    def diffusion(self, g: float) -> float:
        return g if self is NoiseNormalization.VACUUM else g / 4.0


@dataclass(frozen=True, slots=True)
class TimeGrid:
    t_end: float
    n_steps: int

    def __post_init__(self):
        if not (math.isfinite(self.t_end) and self.t_end > 0):
            raise ConfigurationError("t_f", f"must be > 0 (got {self.t_end!r})")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ConfigurationError("n_steps", "must be a positive integer")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @classmethod
    def from_step(cls, t_end: float, dt: float) -> TimeGrid:
        """Grid with the largest step <= dt that divides t_end exactly."""
        if not (math.isfinite(dt) and dt > 0):
            raise ConfigurationError("dt", f"must be > 0 (got {dt!r})")
        n_steps = max(1, round(t_end / dt))
        if t_end / n_steps > dt * (1 + GRID_TOLERANCE):
            n_steps += 1
        return cls(t_end=t_end, n_steps=n_steps)

    @classmethod
    def default_for(cls, g: float, t_end: float, steps_per_gain: int = 100) -> TimeGrid:
        return cls.from_step(t_end, 1.0 / (steps_per_gain * g))

    @property
    def t_start(self) -> float:
        return 0.0

    @property
    def dt(self) -> float:
        return self.t_end / self.n_steps

    def times(self) -> NDArray[np.float64]:
        return np.linspace(0.0, self.t_end, self.n_steps + 1)

    def index_of(self, t: float) -> int:
        """Nearest grid index to t, which must lie within [0, t_end]."""
        if not (-GRID_TOLERANCE <= t <= self.t_end * (1 + GRID_TOLERANCE)):
            raise ConfigurationError("t", f"{t!r} lies outside the grid [0, {self.t_end!r}]")
        return min(self.n_steps, max(0, round(t / self.dt)))


@dataclass(frozen=True, slots=True)
class DriftNoiseSpec:
    g: float
    direction: Direction
    diffusion: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.g) and self.g > 0):
            raise ConfigurationError("g", f"gain rate must be > 0 (got {self.g!r})")
        object.__setattr__(self, "direction", Direction(self.direction))
        if self.diffusion is None:
            object.__setattr__(self, "diffusion", self.g)
        elif not (math.isfinite(self.diffusion) and self.diffusion >= 0):
            raise ConfigurationError("diffusion", f"must be >= 0 (got {self.diffusion!r})")

    @property
    def stationary_variance(self) -> float:
        return self.diffusion / self.g

    def step_coefficients(self, dt: float, integrator: Integrator = Integrator.EXACT) -> tuple[float, float]:
        """(decay, noise standard deviation) of one step of length dt."""
        if Integrator(integrator) is Integrator.EXACT:
            return math.exp(-self.g * dt), math.sqrt(-self.stationary_variance * math.expm1(-2.0 * self.g * dt))
        return 1.0 - self.g * dt, math.sqrt(2.0 * self.diffusion * dt)


@dataclass(frozen=True, slots=True)
class Trajectory:
    label: str
    direction: Direction
    grid: TimeGrid
    samples: NDArray[np.float64]
    run_id: int


@dataclass(frozen=True, slots=True)
class TrajectoryBatch:
    """
    Many runs of one variable on a shared grid, rows keyed by run_id.

    Paired forward and backward batches of a run share run_ids and grid.
    """

    label: str
    direction: Direction
    grid: TimeGrid
    samples: NDArray[np.float64]
    run_ids: NDArray[np.int64]
    gain_rate: float

    def __post_init__(self):
        if self.samples.shape != (len(self.run_ids), self.grid.n_steps + 1):
            msg = f"samples shape {self.samples.shape} does not match {len(self.run_ids)} runs on the grid"
            raise ValueError(msg)

    def __len__(self) -> int:
        return len(self.run_ids)

    def __getitem__(self, row: int) -> Trajectory:
        return Trajectory(self.label, self.direction, self.grid, self.samples[row], int(self.run_ids[row]))

    def at(self, t_index: int) -> NDArray[np.float64]:
        return self.samples[:, t_index]

    def head(self, count: int) -> TrajectoryBatch:
        return TrajectoryBatch(
            self.label, self.direction, self.grid, self.samples[:count], self.run_ids[:count], self.gain_rate
        )


def _run_ids(count: int, run_ids: ArrayLike | None) -> NDArray[np.int64]:
    if run_ids is None:
        return np.arange(count, dtype=np.int64)
    return np.asarray(run_ids, dtype=np.int64)


def _check_direction(spec: DriftNoiseSpec, expected: Direction):
    if spec.direction is not expected:
        raise ConfigurationError("direction", f"expected a {expected} noise spec (got {spec.direction})")


def integrate_backward(
    x_f: ArrayLike,
    grid: TimeGrid,
    spec: DriftNoiseSpec,
    rng: np.random.Generator,
    *,
    integrator: Integrator = Integrator.EXACT,
    label: str = "x",
    run_ids: ArrayLike | None = None,
) -> TrajectoryBatch:
    """
    Solve dx/dt_ = -g x + xi from t_f back to t_1 for each boundary value.

    Uses the exact OU transition per step unless Euler-Maruyama is requested.
    """
    _check_direction(spec, Direction.BACKWARD)
    boundary = np.atleast_1d(np.asarray(x_f, dtype=np.float64))
    decay, noise_std = spec.step_coefficients(grid.dt, integrator)
    noise = rng.standard_normal((grid.n_steps, boundary.size))
    path = np.empty((grid.n_steps + 1, boundary.size))
    path[-1] = boundary
    for k in range(grid.n_steps - 1, -1, -1):
        path[k] = path[k + 1] * decay + noise_std * noise[k]
    return TrajectoryBatch(
        label=label,
        direction=Direction.BACKWARD,
        grid=grid,
        samples=np.ascontiguousarray(path.T),
        run_ids=_run_ids(boundary.size, run_ids),
        gain_rate=spec.g,
    )


def integrate_forward(
    p_0: ArrayLike,
    grid: TimeGrid,
    spec: DriftNoiseSpec,
    rng: np.random.Generator,
    *,
    integrator: Integrator = Integrator.EXACT,
    label: str = "p",
    run_ids: ArrayLike | None = None,
) -> TrajectoryBatch:
    """Solve dp/dt = -g p + xi from t_1 up to t_f."""
    _check_direction(spec, Direction.FORWARD)
    initial = np.atleast_1d(np.asarray(p_0, dtype=np.float64))
    decay, noise_std = spec.step_coefficients(grid.dt, integrator)
    noise = rng.standard_normal((grid.n_steps, initial.size))
    path = np.empty((grid.n_steps + 1, initial.size))
    path[0] = initial
    for k in range(grid.n_steps):
        path[k + 1] = path[k] * decay + noise_std * noise[k]
    return TrajectoryBatch(
        label=label,
        direction=Direction.FORWARD,
        grid=grid,
        samples=np.ascontiguousarray(path.T),
        run_ids=_run_ids(initial.size, run_ids),
        gain_rate=spec.g,
    )


def propagate(
    values: ArrayLike,
    spec: DriftNoiseSpec,
    duration: float,
    rng: np.random.Generator,
) -> NDArray[np.float64]:
    """
    One exact OU transition over ``duration``, in the direction of ``spec``.

    Used where only the end point of a path is read out.
    """
    if duration < 0:
        raise ConfigurationError("duration", f"must be >= 0 (got {duration!r})")
    start = np.atleast_1d(np.asarray(values, dtype=np.float64))
    decay, noise_std = spec.step_coefficients(duration)
    return start * decay + noise_std * rng.standard_normal(start.size)


@dataclass(frozen=True, slots=True)
class Decomposition:
    eigen: NDArray[np.float64]
    noise: NDArray[np.float64]

    def reassemble(self) -> NDArray[np.float64]:
        return self.eigen + self.noise


def decompose(batch: TrajectoryBatch, boundary_mean: ArrayLike) -> Decomposition:
    """
    Split backward paths into x_j(t) = x_j e^{gt} and the noise delta x(t).

    ``boundary_mean`` is G x_j of the mixture component each boundary value was
    drawn from, one per run or a scalar for all.
    """
    if batch.direction is not Direction.BACKWARD:
        raise ConfigurationError("direction", "decompose needs a backward trajectory")
    means = np.asarray(boundary_mean, dtype=np.float64).reshape(-1, 1)
    times = batch.grid.times()
    eigen = means * np.exp(-batch.gain_rate * (batch.grid.t_end - times))
    eigen = np.broadcast_to(eigen, batch.samples.shape).copy()
    return Decomposition(eigen=eigen, noise=batch.samples - eigen)


def readout(traj: TrajectoryBatch | Trajectory, t_index: int, g: float) -> NDArray[np.float64] | float:
    """Scaled amplitude x(t) / e^{gt} at a grid index."""
    if not (0 <= t_index <= traj.grid.n_steps):
        raise ConfigurationError("t_index", f"{t_index} is outside 0..{traj.grid.n_steps}")
    scale = math.exp(g * t_index * traj.grid.dt)
    if isinstance(traj, Trajectory):
        return float(traj.samples[t_index]) / scale
    return traj.at(t_index) / scale


def macroscopic_readout_index(grid: TimeGrid, g: float, x1: float, x2: float, diffusion: float) -> int | None:
    """
    Earliest grid index where the amplified eigenvalue gap G |x1 - x2| reaches
    ten noise widths sqrt(D/g); None if the grid ends first.
    """
    width = math.sqrt(diffusion / g)
    gap = abs(x1 - x2)
    if gap == 0:
        return None
    needed = BAND_SEPARATION * width / gap
    if needed <= 1.0:
        return 0
    t_needed = math.log(needed) / g
    index = math.ceil(t_needed / grid.dt - GRID_TOLERANCE)
    return index if index <= grid.n_steps else None


def concatenate_batches(batches: list[TrajectoryBatch]) -> TrajectoryBatch | None:
    """Join per-block batches of one variable in block order; None if there are none."""
    batches = [b for b in batches if len(b)]
    if not batches:
        return None
    first = batches[0]
    return TrajectoryBatch(
        label=first.label,
        direction=first.direction,
        grid=first.grid,
        samples=np.concatenate([b.samples for b in batches]),
        run_ids=np.concatenate([b.run_ids for b in batches]),
        gain_rate=first.gain_rate,
    )
