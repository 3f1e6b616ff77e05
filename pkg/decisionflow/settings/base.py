"""
Base Django settings for the decisionflow project.
Contains common settings shared across all environments.
"""

import os
from pathlib import Path
from decouple import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent.parent

# Application definition
INSTALLED_APPS = [
    'django.contrib.auth',
    'django.contrib.contenttypes',

    # Third party apps
    'rest_framework',

    # Local apps
    'flow',
]

MIDDLEWARE = []

# Internationalization
LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

# Default primary key field type
DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# Sampling engine configuration
DECISIONFLOW = {
    # 3^n_nodes states allowed in an exact enumeration of the prior DAG
    'EXACT_STATE_CAP': config('DF_EXACT_STATE_CAP', default=20_000_000, cast=int),
    # 2^n_nodes configurations allowed in an exact Gibbs table
    'GIBBS_CONFIG_CAP': config('DF_GIBBS_CONFIG_CAP', default=2 ** 24, cast=int),
    'DELTA_EPSILON': config('DF_DELTA_EPSILON', default=1e-8, cast=float),
    'OUTPUT_ROOT': Path(config('DF_OUTPUT_ROOT', default=str(BASE_DIR / 'runs'))),
    'THREADS': config('DF_THREADS', default=os.cpu_count() or 1, cast=int),
    'REPETITIONS': config('DF_REPETITIONS', default=10, cast=int),
    'MCMC_TOTAL': config('DF_MCMC_TOTAL', default=5000, cast=int),
    'MCMC_BURN_IN': config('DF_MCMC_BURN_IN', default=2000, cast=int),
    'MCMC_STRIDE': config('DF_MCMC_STRIDE', default=10, cast=int),
    'REFERENCE_MCMC_SAMPLES': config('DF_REFERENCE_MCMC_SAMPLES', default=100_000, cast=int),
    'HISTOGRAM_BINS': config('DF_HISTOGRAM_BINS', default=40, cast=int),
    'MIN_VISITS': config('DF_MIN_VISITS', default=10, cast=int),
}

LOG_DIR = Path(config('DF_LOG_DIR', default=str(BASE_DIR / 'logs')))
LOG_DIR.mkdir(parents=True, exist_ok=True)

# Logging configuration
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {process:d} {thread:d} {message}',
            'style': '{',
        },
        'simple': {
            'format': '{levelname} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'file': {
            'level': 'INFO',
            'class': 'logging.FileHandler',
            'filename': LOG_DIR / 'decisionflow.log',
            'formatter': 'verbose',
        },
        'console': {
            'level': 'WARNING',
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'root': {
        'handlers': ['console', 'file'],
        'level': 'INFO',
    },
    'loggers': {
        'django': {
            'handlers': ['console', 'file'],
            'level': 'INFO',
            'propagate': False,
        },
        'flow': {
            'handlers': ['console', 'file'],
            'level': 'INFO',
            'propagate': False,
        },
    },
}
