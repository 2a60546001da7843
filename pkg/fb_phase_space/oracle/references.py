"""
Versioned reference tables: CHSH search optimum and Born weights.

The table is computed by the oracle (``manage.py build_reference_tables``)
and stored as JSON; ``run_bell`` only reads it back.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
from django.conf import settings

from fb_phase_space import __version__
from fb_phase_space.exceptions import ReferenceTableError
from fb_phase_space.oracle.bell import search_chsh_optimum
from fb_phase_space.oracle.fock import build_state
from fb_phase_space.oracle.quadrature import quadrature_pdf
from fb_phase_space.simulation.states import SuperpositionSpec

logger = logging.getLogger(__name__)

TABLE_VERSION = 1
DEFAULT_ZETAS = tuple(np.round(np.linspace(0.5, 2.0, 16), 3))


def reference_table_path() -> Path:
    default = Path(__file__).resolve().parent / "fixtures" / "reference_tables.json"
    return Path(getattr(settings, "ORACLE_REFERENCE_TABLE", default))


def born_weights(spec: SuperpositionSpec) -> dict[str, float]:
    """Probability of x > 0 and x < 0 from the Born density of the prepared superposition."""
    pdf = quadrature_pdf(build_state(spec), 0.0)
    positive = pdf.grid.axis > 0
    probabilities = pdf.cell_probabilities
    return {"positive": float(probabilities[positive].sum()), "negative": float(probabilities[~positive].sum())}


def build_reference_tables(
    zetas: tuple[float, ...] = DEFAULT_ZETAS,
    *,
    angle_steps: int = 24,
    gain: float | None = None,
) -> dict:
    search = search_chsh_optimum(zetas, angle_steps=angle_steps, gain=gain)
    spec = SuperpositionSpec()
    return {
        "version": TABLE_VERSION,
        "package_version": __version__,
        "chsh": search.as_dict(),
        "born_weights": {
            "spec": {"c1": spec.c1, "c2_mag": spec.c2_mag, "x1": spec.x1, "x2": spec.x2, "r": spec.r},
            "weights": born_weights(spec),
        },
    }


def write_reference_table(table: dict, path: Path | None = None) -> Path:
    path = path or reference_table_path()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(table, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("Wrote reference table to %s", path)
    return path


def load_reference_table(path: Path | None = None) -> dict:
    """
    Read the stored table. Nothing is computed or written here: a missing or
    outdated table raises ``ReferenceTableError``.
    """
    path = path or reference_table_path()
    if not path.exists():
        msg = f"reference table {path} not found; run `manage.py build_reference_tables` or set zeta and the angles"
        raise ReferenceTableError(msg)
    table = json.loads(path.read_text(encoding="utf-8"))
    if table.get("version") != TABLE_VERSION:
        msg = f"reference table {path} has version {table.get('version')} (expected {TABLE_VERSION}); rebuild it"
        raise ReferenceTableError(msg)
    return table
