"""
Experiment configuration: a JSON file and/or command-line flags, merged
into a validated ``ExperimentConfig``. Flags win over file values; both
layers are kept for the run manifest.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict
from dataclasses import dataclass
from dataclasses import field
from dataclasses import fields
from dataclasses import replace
from enum import StrEnum
from pathlib import Path
from typing import Any

from django.conf import settings

from fb_phase_space.exceptions import ConfigurationError
from fb_phase_space.simulation.boundary import EPRSetting
from fb_phase_space.simulation.dynamics import Integrator
from fb_phase_space.simulation.dynamics import NoiseNormalization
from fb_phase_space.simulation.dynamics import TimeGrid
from fb_phase_space.simulation.states import ConditionalForm
from fb_phase_space.simulation.states import EPRSpec
from fb_phase_space.simulation.states import MixtureSpec
from fb_phase_space.simulation.states import PairCoherentSpec
from fb_phase_space.simulation.states import StatePrep
from fb_phase_space.simulation.states import SuperpositionSpec


class Experiment(StrEnum):
    SUPERPOSITION = "superposition"
    FRINGES = "fringes"
    EPR = "epr"
    SCHRODINGER = "schrodinger"
    BELL = "bell"
    VALIDATE = "validate"


class StateKind(StrEnum):
    SUPERPOSITION = "superposition"
    MIXTURE = "mixture"
    EPR = "epr"
    PAIR_COHERENT = "pair-coherent"


class Readout(StrEnum):
    """``FINAL`` reads x at t_f; ``MACROSCOPIC`` at the first time the eigenvalue bands separate."""

    FINAL = "final"
    MACROSCOPIC = "macroscopic"


DEFAULT_STATE = {
    Experiment.SUPERPOSITION: StateKind.SUPERPOSITION,
    Experiment.FRINGES: StateKind.SUPERPOSITION,
    Experiment.EPR: StateKind.EPR,
    Experiment.SCHRODINGER: StateKind.EPR,
    Experiment.BELL: StateKind.PAIR_COHERENT,
    Experiment.VALIDATE: StateKind.SUPERPOSITION,
}

ALLOWED_STATES = {
    Experiment.SUPERPOSITION: {StateKind.SUPERPOSITION, StateKind.MIXTURE},
    Experiment.FRINGES: {StateKind.SUPERPOSITION, StateKind.MIXTURE},
    Experiment.EPR: {StateKind.EPR},
    Experiment.SCHRODINGER: {StateKind.EPR},
    Experiment.BELL: {StateKind.PAIR_COHERENT},
    Experiment.VALIDATE: set(StateKind),
}

# Experiments whose readout time is fixed at t_f.
FINAL_READOUT_ONLY = frozenset({Experiment.FRINGES, Experiment.EPR, Experiment.SCHRODINGER, Experiment.BELL})

# Flag spellings accepted in files and on the command line.
FLAG_ALIASES = {
    "tf": "t_f",
    "n": "n_runs",
    "c2": "c2_mag",
    "noise": "noise_normalization",
}


# Fields that change how a run executes or where it is written, never its results.
EXECUTION_FIELDS = frozenset({"threads", "output_dir", "store_runs", "validate", "enforce_gates"})


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: Experiment = Experiment.SUPERPOSITION
    state: StateKind | None = None
    c1: float | None = None
    c2_mag: float | None = None
    x1: float = 0.8
    x2: float = -0.8
    weights: tuple[float, ...] | None = None
    means: tuple[float, ...] | None = None
    r: float = 2.0
    zeta: float | None = None
    g: float = 1.0
    t_f: float = 3.0
    dt: float | None = None
    n_runs: int = 10_000
    seed: int = 0
    theta: float | None = None
    theta_prime: float | None = None
    phi: float | None = None
    phi_prime: float | None = None
    setting: EPRSetting = EPRSetting.XX
    readout: Readout = Readout.FINAL
    noise_normalization: NoiseNormalization = NoiseNormalization.VACUUM
    diffusion: float | None = None
    conditional_form: ConditionalForm = ConditionalForm.PRINTED
    integrator: Integrator = Integrator.EXACT
    threads: int | None = None
    output_dir: str | None = None
    store_runs: int | None = None
    validate: bool = False
    enforce_gates: bool = True
    track_conjugate: bool = False
    sources: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        coerce = {
            "experiment": Experiment,
            "setting": EPRSetting,
            "readout": Readout,
            "noise_normalization": NoiseNormalization,
            "conditional_form": ConditionalForm,
            "integrator": Integrator,
        }
        for name, kind in coerce.items():
            try:
                object.__setattr__(self, name, kind(getattr(self, name)))
            except ValueError as e:
                choices = ", ".join(k.value for k in kind)
                raise ConfigurationError(name, f"{getattr(self, name)!r} is not one of {choices}") from e
        state = DEFAULT_STATE[self.experiment] if self.state is None else self.state
        try:
            object.__setattr__(self, "state", StateKind(state))
        except ValueError as e:
            raise ConfigurationError("state", f"unknown state {state!r}") from e
        if self.state not in ALLOWED_STATES[self.experiment]:
            raise ConfigurationError("state", f"{self.state} cannot be used with the {self.experiment} experiment")
        if self.readout is Readout.MACROSCOPIC and self.experiment in FINAL_READOUT_ONLY:
            raise ConfigurationError("readout", f"the {self.experiment} experiment reads out at t_f only")
        for name in ("weights", "means"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, tuple(float(v) for v in value))
        self._check_positive("g", self.g)
        self._check_positive("t_f", self.t_f)
        if self.dt is not None:
            self._check_positive("dt", self.dt)
        if int(self.n_runs) != self.n_runs or self.n_runs < 1:
            raise ConfigurationError("n_runs", f"must be a positive integer (got {self.n_runs!r})")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed", "must be an integer in [0, 2^64)")
        if self.threads is not None and self.threads < 1:
            raise ConfigurationError("threads", "must be >= 1")
        if self.store_runs is not None and self.store_runs < 0:
            raise ConfigurationError("store_runs", "must be >= 0")
        if self.diffusion is not None and not (math.isfinite(self.diffusion) and self.diffusion >= 0):
            raise ConfigurationError("diffusion", "must be >= 0")
        for name in ("theta", "theta_prime", "phi", "phi_prime"):
            angle = getattr(self, name)
            if angle is not None and not 0.0 <= angle < 2.0 * math.pi:
                raise ConfigurationError(name, f"setting angles must lie in [0, 2 pi) (got {angle!r})")
        # Builds (and so validates) the state preparation.
        if self.state is not StateKind.PAIR_COHERENT or self.zeta is not None:
            self.state_prep()

    @staticmethod
    def _check_positive(name: str, value: float):
        if not (isinstance(value, int | float) and math.isfinite(value) and value > 0):
            raise ConfigurationError(name, f"must be > 0 (got {value!r})")

    def state_prep(self, zeta: float | None = None) -> StatePrep:
        if self.state is StateKind.SUPERPOSITION:
            c1, c2 = self._amplitudes()
            return SuperpositionSpec(c1=c1, c2_mag=c2, x1=self.x1, x2=self.x2, r=self.r)
        if self.state is StateKind.MIXTURE:
            means = self.means if self.means is not None else (self.x1, self.x2)
            if self.weights is not None:
                weights = self.weights
            elif self.means is None and (self.c1 is not None or self.c2_mag is not None):
                weights = tuple(c**2 for c in self._amplitudes())
            else:
                weights = (1.0 / len(means),) * len(means)
            return MixtureSpec(weights=weights, means=means, r=self.r)
        if self.state is StateKind.EPR:
            return EPRSpec(r=self.r)
        zeta = self.zeta if zeta is None else zeta
        if zeta is None:
            raise ConfigurationError("zeta", "the pair-coherent state needs zeta")
        return PairCoherentSpec(zeta=zeta)

    def _amplitudes(self) -> tuple[float, float]:
        if self.c1 is None and self.c2_mag is None:
            return math.sqrt(0.5), math.sqrt(0.5)
        if self.c2_mag is None:
            if abs(self.c1) > 1:
                raise ConfigurationError("c1", "must satisfy |c1| <= 1")
            return self.c1, math.sqrt(max(0.0, 1.0 - self.c1**2))
        if self.c1 is None:
            if not 0 <= self.c2_mag <= 1:
                raise ConfigurationError("c2_mag", "must lie in [0, 1]")
            return math.sqrt(max(0.0, 1.0 - self.c2_mag**2)), self.c2_mag
        return self.c1, self.c2_mag

    @property
    def diffusion_constant(self) -> float:
        return self.diffusion if self.diffusion is not None else self.noise_normalization.diffusion(self.g)

    def grid(self) -> TimeGrid:
        if self.dt is not None:
            return TimeGrid.from_step(self.t_f, self.dt)
        return TimeGrid.default_for(self.g, self.t_f, getattr(settings, "SIMULATION_STEPS_PER_GAIN", 100))

    @property
    def run_block_size(self) -> int:
        """Runs per random-stream block; part of the reproducibility key with the seed."""
        return getattr(settings, "SIMULATION_RUN_BLOCK_SIZE", 4096)

    @property
    def worker_threads(self) -> int:
        return self.threads or getattr(settings, "SIMULATION_DEFAULT_THREADS", 1)

    @property
    def stored_runs(self) -> int:
        if self.store_runs is not None:
            return min(self.store_runs, self.n_runs)
        return min(self.n_runs, getattr(settings, "SIMULATION_STORED_RUNS", 10_000))

    @property
    def output_path(self) -> Path:
        return Path(self.output_dir or getattr(settings, "SIMULATION_OUTPUT_DIR", "runs"))

    def as_dict(self) -> dict[str, Any]:
        values = asdict(self)
        values.pop("sources")
        for key, value in values.items():
            if isinstance(value, StrEnum):
                values[key] = value.value
            elif isinstance(value, tuple):
                values[key] = list(value)
        return values

    def report_dict(self) -> dict[str, Any]:
        """
        The config echoed in report.json: every field that can change a result,
        plus the block size. Execution-only fields stay in the manifest.
        """
        values = {key: value for key, value in self.as_dict().items() if key not in EXECUTION_FIELDS}
        values["run_block_size"] = self.run_block_size
        return values


CONFIG_FIELDS = {f.name for f in fields(ExperimentConfig)} - {"sources"}


def _normalize_keys(values: dict[str, Any], origin: str) -> dict[str, Any]:
    normalized = {}
    for key, value in values.items():
        name = key.replace("-", "_")
        name = FLAG_ALIASES.get(name, name)
        if name not in CONFIG_FIELDS:
            raise ConfigurationError(key, f"unknown {origin} option")
        normalized[name] = value
    return normalized


def read_config_file(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError("config", f"file not found: {path}")
    try:
        values = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigurationError("config", f"{path} is not valid JSON: {e}") from e
    if not isinstance(values, dict):
        raise ConfigurationError("config", f"{path} must hold a JSON object")
    return _normalize_keys(values, "config file")


def parse_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    """
    Merge a config file with flag overrides (``None`` values are ignored).

    Raises ``ConfigurationError`` naming the offending field.
    """
    file_values = read_config_file(path) if path is not None else {}
    flag_values = _normalize_keys({k: v for k, v in (overrides or {}).items() if v is not None}, "flag")
    merged = {**file_values, **flag_values}
    try:
        config = ExperimentConfig(**merged)
    except TypeError as e:
        raise ConfigurationError("config", str(e)) from e
    sources = {"file": str(path) if path is not None else None, "file_values": file_values, "flag_values": flag_values}
    return replace(config, sources=sources)
