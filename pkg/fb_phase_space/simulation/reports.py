"""
Experiment reports and the on-disk artifacts of a run.

A run directory holds ``trajectories.csv`` (long format, one row per
sample), ``report.json`` (statistics and gates, byte-identical for identical
config and seed) and ``manifest.json`` (config echo, checksums, timings).
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
from collections.abc import Iterable
from dataclasses import dataclass
from dataclasses import field
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np
from django.utils import timezone

from fb_phase_space import __version__
from fb_phase_space.simulation.dynamics import TrajectoryBatch

logger = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = ("run_id", "variable", "direction", "t", "value")
TRAJECTORIES_FILE = "trajectories.csv"
REPORT_FILE = "report.json"
MANIFEST_FILE = "manifest.json"


def to_jsonable(value: Any) -> Any:
    """Plain JSON types for numpy scalars/arrays, enums, tuples and report objects; NaN becomes null."""
    if hasattr(value, "as_dict"):
        return to_jsonable(value.as_dict())
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, np.bool_ | bool):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating | float):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, complex | np.complexfloating):
        return [float(value.real), float(value.imag)]
    if isinstance(value, Path):
        return str(value)
    return value


@dataclass
class ExperimentReport:
    experiment: str
    config: dict[str, Any]
    statistics: dict[str, Any] = field(default_factory=dict)
    gates: dict[str, bool] = field(default_factory=dict)
    histograms: dict[str, Any] = field(default_factory=dict)
    trajectories: tuple[TrajectoryBatch, ...] = field(default=(), compare=False, repr=False)
    run_labels: np.ndarray | None = field(default=None, compare=False, repr=False)
    version: str = __version__

    @property
    def passed(self) -> bool:
        return all(self.gates.values())

    def failed_gates(self) -> list[str]:
        return sorted(name for name, ok in self.gates.items() if not ok)

    def as_dict(self) -> dict[str, Any]:
        return to_jsonable(
            {
                "experiment": self.experiment,
                "version": self.version,
                "config": self.config,
                "statistics": self.statistics,
                "gates": self.gates,
                "passed": self.passed,
                "histograms": self.histograms,
            },
        )

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"


def _format(value: float) -> str:
    return f"{value:.17g}"


def trajectory_rows(batches: Iterable[TrajectoryBatch]) -> Iterable[tuple[str, ...]]:
    for batch in batches:
        times = [_format(t) for t in batch.grid.times()]
        direction = str(batch.direction)
        for run_id, path in zip(batch.run_ids, batch.samples, strict=True):
            run = str(int(run_id))
            for t, value in zip(times, path, strict=True):
                yield run, batch.label, direction, t, _format(value)


def write_trajectories_csv(batches: Iterable[TrajectoryBatch], path: Path) -> int:
    """Write the long-format CSV and return the number of data rows."""
    rows = 0
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(TRAJECTORY_COLUMNS)
        for row in trajectory_rows(batches):
            writer.writerow(row)
            rows += 1
    return rows


def read_trajectories_csv(path: Path) -> dict[tuple[int, str], np.ndarray]:
    """(run_id, variable) -> samples in time order, as written by ``write_trajectories_csv``."""
    paths: dict[tuple[int, str], list[float]] = {}
    with path.open(newline="", encoding="utf-8") as handle:
        for row in csv.DictReader(handle):
            paths.setdefault((int(row["run_id"]), row["variable"]), []).append(float(row["value"]))
    return {key: np.asarray(values) for key, values in paths.items()}


def sha256_of(path: Path, chunk_bytes: int = 1 << 20) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as handle:
        for chunk in iter(lambda: handle.read(chunk_bytes), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    config: dict[str, Any]
    sources: dict[str, Any]
    seed: int
    noise_normalization: str
    diffusion: float
    run_block_size: int
    files: list[dict[str, Any]] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)
    version: str = __version__
    created: str = field(default_factory=lambda: timezone.now().isoformat())

    def add_file(self, path: Path, rows: int | None = None):
        entry = {"name": path.name, "sha256": sha256_of(path), "bytes": path.stat().st_size}
        if rows is not None:
            entry["rows"] = rows
        self.files.append(entry)

    def as_dict(self) -> dict[str, Any]:
        return to_jsonable(dataclasses.asdict(self))


def write_outputs(
    report: ExperimentReport,
    manifest: RunManifest,
    output_dir: Path,
) -> list[Path]:
    """
    Write the three run files. ``OSError`` propagates with the failing path
    in its message.
    """
    output_dir.mkdir(parents=True, exist_ok=True)
    trajectories = output_dir / TRAJECTORIES_FILE
    report_path = output_dir / REPORT_FILE
    manifest_path = output_dir / MANIFEST_FILE

    rows = write_trajectories_csv(report.trajectories, trajectories)
    manifest.add_file(trajectories, rows=rows)
    report_path.write_text(report.to_json(), encoding="utf-8")
    manifest.add_file(report_path)
    manifest_path.write_text(json.dumps(manifest.as_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("Wrote %d trajectory rows and the report to %s", rows, output_dir)
    return [trajectories, report_path, manifest_path]
