"""
Management command to compute the oracle reference tables.

Runs the CHSH grid search over zeta and the four setting angles, evaluates
the Born weights of the default superposition, and writes the versioned
JSON table read by ``simulate --experiment bell`` and the acceptance tests.
"""

from pathlib import Path

import numpy as np
from django.core.management.base import BaseCommand
from django.core.management.base import CommandError

from fb_phase_space.exceptions import ConfigurationError
from fb_phase_space.exceptions import PhaseSpaceError
from fb_phase_space.oracle.references import build_reference_tables
from fb_phase_space.oracle.references import reference_table_path
from fb_phase_space.oracle.references import write_reference_table


class Command(BaseCommand):
    help = "Compute the CHSH search optimum and Born weights and store them as JSON"

    def add_arguments(self, parser):
        parser.add_argument(
            "--zeta-min",
            type=float,
            default=0.5,
            help="Smallest pair-coherent zeta in the search",
        )
        parser.add_argument(
            "--zeta-max",
            type=float,
            default=2.0,
            help="Largest pair-coherent zeta in the search",
        )
        parser.add_argument(
            "--zeta-count",
            type=int,
            default=16,
            help="Number of zeta values between min and max",
        )
        parser.add_argument(
            "--angle-steps",
            type=int,
            default=24,
            help="Angle grid points per setting on [0, 2 pi)",
        )
        parser.add_argument(
            "--gain",
            type=float,
            default=None,
            help="Finite amplification G for the outcome signs (default: G -> infinity)",
        )
        parser.add_argument(
            "--output",
            type=str,
            default=None,
            help="Where to write the table (default: ORACLE_REFERENCE_TABLE)",
        )

    def handle(self, *args, **options):
        if options["zeta_count"] < 1 or options["zeta_min"] > options["zeta_max"]:
            msg = "zeta range is empty"
            raise CommandError(msg, returncode=2)
        zetas = tuple(np.round(np.linspace(options["zeta_min"], options["zeta_max"], options["zeta_count"]), 6))
        path = Path(options["output"]) if options["output"] else reference_table_path()

        self.stdout.write(f"Searching {len(zetas)} zeta values on a {options['angle_steps']}-step angle grid")
        try:
            table = build_reference_tables(zetas, angle_steps=options["angle_steps"], gain=options["gain"])
        except ConfigurationError as e:
            raise CommandError(f"invalid search settings: {e}", returncode=2) from e
        except PhaseSpaceError as e:
            raise CommandError(str(e), returncode=3) from e
        try:
            write_reference_table(table, path)
        except OSError as e:
            msg = f"could not write {path}: {e}"
            raise CommandError(msg, returncode=3) from e

        best = table["chsh"]["best"]
        verdict = "violates" if best["violates"] else "does not violate"
        self.stdout.write(
            self.style.SUCCESS(
                f"Best S = {best['s_value']:.6f} at zeta = {best['zeta'][0]:g} ({verdict} the local bound 2)",
            ),
        )
        self.stdout.write(self.style.SUCCESS(f"Reference table written to {path}"))
