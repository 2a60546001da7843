"""
Local development settings: debug logging for the simulator and a run
directory inside the checkout.
"""

from .base import *  # noqa: F403
from .base import LOGGING
from .base import env

# GENERAL
# ------------------------------------------------------------------------------
# https://docs.djangoproject.com/en/dev/ref/settings/#debug
DEBUG = True
# https://docs.djangoproject.com/en/dev/ref/settings/#secret-key
SECRET_KEY = env(
    "DJANGO_SECRET_KEY",
    default="zVV15fLhs32NAPeeyNi3CgVpLZjEoVItWOx7nrpFNMwScCEe3HRk70YoQ4DWaV36",
)

# LOGGING
# ------------------------------------------------------------------------------
LOGGING["loggers"]["fb_phase_space"]["level"] = "DEBUG"  # type: ignore[index]

# SIMULATION
# ------------------------------------------------------------------------------
SIMULATION_DEFAULT_THREADS = env.int("FB_PHASE_SPACE_THREADS", default=1)
