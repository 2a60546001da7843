# ruff: noqa: ERA001, E501
"""Base settings to build other settings files upon."""

from pathlib import Path

import environ

BASE_DIR = Path(__file__).resolve(strict=True).parent.parent.parent
# fb_phase_space/
APPS_DIR = BASE_DIR / "fb_phase_space"
env = environ.Env()

READ_DOT_ENV_FILE = env.bool("DJANGO_READ_DOT_ENV_FILE", default=False)
if READ_DOT_ENV_FILE:
    # OS environment variables take precedence over variables from .env
    env.read_env(str(BASE_DIR / ".env"))

# GENERAL
# ------------------------------------------------------------------------------
# https://docs.djangoproject.com/en/dev/ref/settings/#debug
DEBUG = env.bool("DJANGO_DEBUG", False)
# https://docs.djangoproject.com/en/dev/ref/settings/#secret-key
SECRET_KEY = env("DJANGO_SECRET_KEY", default="fb-phase-space-has-no-sessions-or-users")
TIME_ZONE = "UTC"
# https://docs.djangoproject.com/en/dev/ref/settings/#language-code
LANGUAGE_CODE = "en-us"
# https://docs.djangoproject.com/en/dev/ref/settings/#use-i18n
USE_I18N = False
# https://docs.djangoproject.com/en/dev/ref/settings/#use-tz
USE_TZ = True

# DATABASES
# ------------------------------------------------------------------------------
# The simulator keeps no state between runs; every artifact is a file.
DATABASES: dict = {}
# https://docs.djangoproject.com/en/stable/ref/settings/#std:setting-DEFAULT_AUTO_FIELD
DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

# APPS
# ------------------------------------------------------------------------------
DJANGO_APPS = [
    "django.contrib.contenttypes",
]
THIRD_PARTY_APPS: list[str] = []

LOCAL_APPS = [
    "fb_phase_space.simulation",
    "fb_phase_space.oracle",
]
# https://docs.djangoproject.com/en/dev/ref/settings/#installed-apps
INSTALLED_APPS = DJANGO_APPS + THIRD_PARTY_APPS + LOCAL_APPS

# SIMULATION
# ------------------------------------------------------------------------------
# Default directory for trajectories.csv, report.json and manifest.json.
SIMULATION_OUTPUT_DIR = env("FB_PHASE_SPACE_OUTPUT_DIR", default=str(BASE_DIR / "runs"))
# Runs per random-stream block; reports do not depend on the thread count.
SIMULATION_RUN_BLOCK_SIZE = 4096
SIMULATION_DEFAULT_THREADS = 1
# Grid steps per 1/g, i.e. dt = 0.01/g.
SIMULATION_STEPS_PER_GAIN = 100
SIMULATION_REJECTION_MAX_TRIES = 1_000_000
# Significance level of the acceptance gates.
SIMULATION_SIGNIFICANCE = 0.01
# At most this many runs have their full trajectories written to the CSV.
SIMULATION_STORED_RUNS = 10_000

# ORACLE
# ------------------------------------------------------------------------------
ORACLE_SINGLE_MODE_CUTOFF = 60
ORACLE_TWO_MODE_CUTOFF = 40
ORACLE_MAX_CUTOFF = 4096
# Probability allowed in the top 10% of the Fock indices.
ORACLE_TAIL_TOLERANCE = 1e-10
ORACLE_GRID_EXTENT = 8.0
ORACLE_GRID_POINTS = 512
ORACLE_QUADRATURE_NODES = 96
ORACLE_REFERENCE_TABLE = APPS_DIR / "oracle" / "fixtures" / "reference_tables.json"

# LOGGING
# ------------------------------------------------------------------------------
# https://docs.djangoproject.com/en/dev/ref/settings/#logging
# See https://docs.djangoproject.com/en/dev/topics/logging for
# more details on how to customize your logging configuration.
LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "verbose": {
            "format": "%(levelname)s %(asctime)s %(module)s %(process)d %(thread)d %(message)s",
        },
    },
    "handlers": {
        "console": {
            "level": "DEBUG",
            "class": "logging.StreamHandler",
            "formatter": "verbose",
        },
    },
    "root": {"level": "WARNING", "handlers": ["console"]},
    "loggers": {
        "fb_phase_space": {"level": "INFO", "handlers": ["console"], "propagate": False},
    },
}
