"""
Production settings for the decisionflow project.
Used on shared compute hosts where sweeps run unattended.
"""

from .base import *
from decouple import config

SECRET_KEY = config('SECRET_KEY')

DEBUG = False

# Run ledger on a persistent volume
DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': config('DF_DATABASE_PATH', default=str(BASE_DIR / 'db.sqlite3')),
    }
}

# Production logging - more restrictive
LOGGING['handlers']['console']['level'] = 'WARNING'
LOGGING['handlers']['file']['level'] = 'WARNING'
LOGGING['loggers']['django']['level'] = 'WARNING'
