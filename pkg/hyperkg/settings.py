"""
Django settings for hyperkg project.

HyperKG - a link-prediction engine with hypernetwork-generated convolutional
filters, driven from Django management commands.
"""

import os
from pathlib import Path

from dotenv import load_dotenv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Local overrides (log level, cache directory, precision) come from .env
load_dotenv(BASE_DIR / '.env')

# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.environ.get('HYPERKG_SECRET_KEY', 'django-insecure-hyperkg-development-key')

DEBUG = os.environ.get('HYPERKG_DEBUG', '0') == '1'

ALLOWED_HOSTS = []

# Application definition
INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'django.contrib.auth',
    'rest_framework',
    'link_prediction',
]

# Database
# No model in this project touches it; Django still expects a default alias.
DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}

# Internationalization
LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# Django REST Framework settings
REST_FRAMEWORK = {
    'DEFAULT_RENDERER_CLASSES': [
        'rest_framework.renderers.JSONRenderer',
    ],
    'UNAUTHENTICATED_USER': None,
}

# Logging
HYPERKG_LOG_LEVEL = os.environ.get('HYPERKG_LOG_LEVEL', 'INFO').upper()

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'standard': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'standard',
        },
    },
    'loggers': {
        'link_prediction': {
            'handlers': ['console'],
            'level': HYPERKG_LOG_LEVEL,
            'propagate': False,
        },
    },
}

# HyperKG settings
HYPERKG_CACHE_DIR = Path(os.environ.get('HYPERKG_CACHE_DIR', BASE_DIR / '.cache'))
HYPERKG_FLOAT_DTYPE = os.environ.get('HYPERKG_FLOAT_DTYPE', 'float64')
HYPERKG_EVAL_BATCH_SIZE = int(os.environ.get('HYPERKG_EVAL_BATCH_SIZE', '256'))
