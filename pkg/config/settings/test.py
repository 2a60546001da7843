"""
With these settings, tests run faster.
"""

from .base import *  # noqa: F403
from .base import LOGGING
from .base import env

# GENERAL
# ------------------------------------------------------------------------------
# https://docs.djangoproject.com/en/dev/ref/settings/#secret-key
SECRET_KEY = env(
    "DJANGO_SECRET_KEY",
    default="1qvfrTzvjceGCAjKx1t5rNEBYsqEOJG5QlLvo4CLjkOSIEL9iUzxEOCwL7aDYCQu",
)
# https://docs.djangoproject.com/en/dev/ref/settings/#test-runner
TEST_RUNNER = "django.test.runner.DiscoverRunner"

# LOGGING
# ------------------------------------------------------------------------------
LOGGING["loggers"]["fb_phase_space"]["level"] = "WARNING"  # type: ignore[index]

# SIMULATION
# ------------------------------------------------------------------------------
# Small blocks so that short test runs still span several blocks.
SIMULATION_RUN_BLOCK_SIZE = 512
SIMULATION_STEPS_PER_GAIN = 50
# Smaller grids keep the oracle tests quick; they still cover the test states.
ORACLE_GRID_POINTS = 256
