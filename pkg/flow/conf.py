"""
Access to the DECISIONFLOW settings dict with built-in defaults.
"""
import os
from pathlib import Path

from django.conf import settings

DEFAULTS = {
    'EXACT_STATE_CAP': 20_000_000,
    'GIBBS_CONFIG_CAP': 2 ** 24,
    'DELTA_EPSILON': 1e-8,
    'OUTPUT_ROOT': Path('runs'),
    'THREADS': os.cpu_count() or 1,
    'REPETITIONS': 10,
    'MCMC_TOTAL': 5000,
    'MCMC_BURN_IN': 2000,
    'MCMC_STRIDE': 10,
    'REFERENCE_MCMC_SAMPLES': 100_000,
    'HISTOGRAM_BINS': 40,
    'MIN_VISITS': 10,
}


def flow_setting(name):
    """Return a DECISIONFLOW setting, falling back to the built-in default."""
    if name not in DEFAULTS:
        raise KeyError(f"Unknown DECISIONFLOW setting '{name}'")
    overrides = getattr(settings, 'DECISIONFLOW', {}) if settings.configured else {}
    return overrides.get(name, DEFAULTS[name])


def resolve(value, name):
    """Use an explicit argument when given, otherwise the configured setting."""
    return flow_setting(name) if value is None else value
