"""Settings for the soliton workbench: a command-line project, no web server and no admin."""
import os
from pathlib import Path

# checkout root; the SQLite file lives here unless WORKBENCH_DB moves it
BASE_DIR = Path(__file__).resolve().parent.parent

# Django requires a key; nothing here is signed or served
SECRET_KEY = os.environ.get("WORKBENCH_SECRET_KEY", "workbench-local-only")

DEBUG = os.environ.get("WORKBENCH_DEBUG", "0") == "1"

ALLOWED_HOSTS: list[str] = []

# contenttypes backs the models; core holds the commands and suites
INSTALLED_APPS = [
    "django.contrib.contenttypes",
    "core",
]

# Database (SQLite; one file per checkout)
DATABASES = {
    "default": {
        "ENGINE": "django.db.backends.sqlite3",
        "NAME": os.environ.get("WORKBENCH_DB", str(BASE_DIR / "workbench.sqlite3")),
    }
}

# run timestamps are stored in UTC
LANGUAGE_CODE = "en-us"
TIME_ZONE = "UTC"
USE_I18N = False
USE_TZ = True

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

# core.* loggers; WORKBENCH_LOG_LEVEL=DEBUG adds per-point and per-iteration lines
LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "workbench": {
            "format": "%(asctime)s %(levelname)s %(name)s: %(message)s",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "workbench",
        },
    },
    "loggers": {
        "core": {
            "handlers": ["console"],
            "level": os.environ.get("WORKBENCH_LOG_LEVEL", "INFO"),
            "propagate": False,
        },
    },
}

# Numerical defaults; every experiment config key falls back to these.
WORKBENCH = {
    "kappa": 0.5,
    "seed": 20240607,
    # chart geometry
    "fd_step": 1e-3,
    "identity_step": 2e-2,
    "identity_tol_analytic": 1e-9,
    "identity_tol_fd": 1e-6,
    "identity_min_order": 1.9,
    "soliton_gate": 1e-8,
    "trig_amplitude": 0.1,
    "trig_modes": 3,
    # spectral
    "degree": 6,
    "spectral_tol": 1e-8,
    "kernel_threshold": 1e-8,
    "fit_window": (4.0, 8.0),
    "fit_radii": 9,
    "slope_tol_rigid": 0.05,
    "slope_tol_bound": 0.5,
    "growth_delta": 0.0,
    "poisson_beta": 0.1,
    "sphere_degree": 2,
    # variation
    "t_step": 1e-3,
    "variation_tol": 1e-6,
    "second_variation_tol": 1e-5,
    "smallness": 0.1,
    # gauge
    "box_half_width": 10.0,
    "grid_points": 161,
    "cutoff_radius": 8.0,
    "max_iter": 6,
    "flow_steps": 8,
    "generator_sup": 1e-2,
    "min_jacobian_det": 0.5,
    "plateau_factor": 2.0,
    "gauge_degree": 3,
    "gauge_epsilon": 1e-2,
}
