"""
Run one configured experiment and write its artifacts.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from dataclasses import field
from pathlib import Path

from fb_phase_space.simulation.config import Experiment
from fb_phase_space.simulation.config import ExperimentConfig
from fb_phase_space.simulation.experiments import EXPERIMENT_RUNNERS
from fb_phase_space.simulation.reports import ExperimentReport
from fb_phase_space.simulation.reports import RunManifest
from fb_phase_space.simulation.reports import write_outputs
from fb_phase_space.simulation.validation import run_validation

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIGURATION = 2
EXIT_RUNTIME = 3
EXIT_GATES = 4


@dataclass
class DispatchResult:
    exit_code: int
    report: ExperimentReport
    files: list[Path] = field(default_factory=list)


def merge_validation(report: ExperimentReport, validation: ExperimentReport) -> ExperimentReport:
    """Fold the battery into an experiment report; its gates are prefixed with ``validate.``."""
    report.statistics["validation"] = validation.statistics
    report.gates.update({f"validate.{name}": ok for name, ok in validation.gates.items()})
    return report


def dispatch(config: ExperimentConfig) -> DispatchResult:
    """
    Run the selected experiment, optionally the validation battery, and
    write trajectories.csv, report.json and manifest.json.

    The exit code is 4 when any gate failed, unless ``enforce_gates`` is
    switched off; the files are written either way. ``OSError`` from the
    writer propagates.
    """
    timings: dict[str, float] = {}
    started = time.perf_counter()
    if config.experiment is Experiment.VALIDATE:
        report = run_validation(config)
    else:
        report = EXPERIMENT_RUNNERS[config.experiment](config)
    timings["experiment_seconds"] = time.perf_counter() - started
    if config.validate and config.experiment is not Experiment.VALIDATE:
        started = time.perf_counter()
        report = merge_validation(report, run_validation(config))
        timings["validation_seconds"] = time.perf_counter() - started

    manifest = RunManifest(
        config=config.as_dict(),
        sources=config.sources,
        seed=config.seed,
        noise_normalization=str(config.noise_normalization),
        diffusion=config.diffusion_constant,
        run_block_size=config.run_block_size,
        timings=timings,
    )
    files = write_outputs(report, manifest, config.output_path)
    logger.info(
        "%s finished: %d gate(s), %d failed",
        config.experiment,
        len(report.gates),
        len(report.failed_gates()),
    )
    exit_code = EXIT_GATES if config.enforce_gates and not report.passed else EXIT_OK
    return DispatchResult(exit_code=exit_code, report=report, files=files)
