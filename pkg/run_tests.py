#!/usr/bin/env python
"""
Test runner script for the forward-backward phase-space simulator.
Provides convenient commands to run different groups of tests.
"""

import sys

import pytest


def run_tests(test_paths=None, verbosity=1, markers=None, extra=None):
    """
    Run pytest with the project settings.

    Args:
        test_paths: Test directories or files (default: the whole package)
        verbosity: Verbosity level (0=quiet, 1=normal, 2=verbose)
        markers: Marker expression passed to -m, e.g. "not slow"
        extra: Further raw pytest arguments
    """
    args = list(test_paths or ["fb_phase_space"])
    if verbosity == 0:
        args.append("-q")
    elif verbosity == 2:
        args.append("-vv")
    if markers:
        args.extend(["-m", markers])
    args.extend(extra or [])
    return pytest.main(args)


def run_oracle_tests(verbosity=1):
    """Run only the truncated-Fock oracle tests"""
    return run_tests(["fb_phase_space/oracle/tests"], verbosity)


def run_simulation_tests(verbosity=1):
    """Run only the simulation tests (without the statistical acceptance runs)"""
    return run_tests(["fb_phase_space/simulation/tests"], verbosity, markers="not slow")


def run_acceptance_tests(verbosity=1):
    """Run only the slow statistical acceptance runs"""
    return run_tests(verbosity=verbosity, markers="slow")


def run_fast_tests(verbosity=1):
    """Run everything except the acceptance runs"""
    return run_tests(verbosity=verbosity, markers="not slow")


def run_all_tests(verbosity=1):
    """Run all tests"""
    return run_tests(verbosity=verbosity)


if __name__ == "__main__":
    import argparse

    parser = argparse.ArgumentParser(description="Run tests for the phase-space simulator")
    parser.add_argument(
        "--type",
        choices=["all", "oracle", "simulation", "acceptance", "fast"],
        default="all",
        help="Type of tests to run",
    )
    parser.add_argument("--verbosity", type=int, choices=[0, 1, 2], default=1, help="Verbosity level")

    args = parser.parse_args()

    test_functions = {
        "all": run_all_tests,
        "oracle": run_oracle_tests,
        "simulation": run_simulation_tests,
        "acceptance": run_acceptance_tests,
        "fast": run_fast_tests,
    }

    failures = test_functions[args.type](args.verbosity)

    sys.exit(failures)
