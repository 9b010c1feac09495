"""
Django settings for spatial_project project.

Proyecto sin base de datos ni superficie HTTP: Django aporta el sistema de
comandos (manage.py), la configuración y el runner de tests. Toda la
configuración sensible o ajustable se lee de variables de entorno.
"""

from pathlib import Path
import os

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.getenv('DJANGO_SECRET_KEY', 'django-insecure-spatial-logic-dev-key')

DEBUG = os.getenv('DJANGO_DEBUG', 'False').lower() in ('1', 'true', 'yes', 'on')

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'rest_framework',
    'spatial',
]

# Sin base de datos: los datos viajan por archivos JSON/JSONL y pipes.
DATABASES = {}


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# ─────────────────────────────────────────────
# Configuración del motor espacial
# ─────────────────────────────────────────────

# Archivo de reglas por defecto para todos los comandos (vacío = KB incorporada).
# El flag --kb de cada comando tiene prioridad.
SPATIAL_KB_PATH = os.getenv('SPATIAL_KB_PATH', '').strip()

# Dimensión del espacio de features hasheadas del modelo de juguete.
SPATIAL_FEATURE_DIM = int(os.getenv('SPATIAL_FEATURE_DIM', '4096'))

# Salt del hash de 64 bits de tokens (fijo para que las features sean estables entre plataformas).
SPATIAL_FEATURE_SEED = int(os.getenv('SPATIAL_FEATURE_SEED', '0'))

# Semilla usada cuando un comando no recibe --seed.
SPATIAL_DEFAULT_SEED = int(os.getenv('SPATIAL_DEFAULT_SEED', '0'))

SPATIAL_LOG_LEVEL = os.getenv('SPATIAL_LOG_LEVEL', 'WARNING').upper()


# Logging: todo diagnóstico va a stderr; stdout queda reservado para datos.
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '%(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'stderr': {
            'class': 'logging.StreamHandler',
            'stream': 'ext://sys.stderr',
            'formatter': 'simple',
        },
    },
    'loggers': {
        'spatial': {
            'handlers': ['stderr'],
            'level': SPATIAL_LOG_LEVEL,
            'propagate': False,
        },
    },
}

REST_FRAMEWORK = {
    'UNAUTHENTICATED_USER': None,
}
