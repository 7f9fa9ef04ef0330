"""Django settings for the QP solver project."""

import os
from pathlib import Path
from dotenv import load_dotenv

load_dotenv()

BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.getenv('DJANGO_SECRET_KEY', 'dev-secret-key-change-in-production')
DEBUG = os.getenv('DJANGO_DEBUG', 'True') == 'True'
ALLOWED_HOSTS = []

# Application definition
INSTALLED_APPS = [
    'qpsolver',
]

# No models; commands and tests run without a database
DATABASES = {}

# Internationalization
LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

# Solver defaults
QP_SOLVER_SIGMA = float(os.getenv('QP_SOLVER_SIGMA', '1.0'))
QP_SOLVER_ALPHA = float(os.getenv('QP_SOLVER_ALPHA', '2.0'))
QP_SOLVER_RHO_PADMM = float(os.getenv('QP_SOLVER_RHO_PADMM', '1.9'))
QP_SOLVER_RHO_ACC = float(os.getenv('QP_SOLVER_RHO_ACC', '2.0'))
QP_SOLVER_TOL = float(os.getenv('QP_SOLVER_TOL', '1e-5'))
QP_SOLVER_MAX_ITER = int(os.getenv('QP_SOLVER_MAX_ITER', '10000'))
QP_SOLVER_CHECK_EVERY = int(os.getenv('QP_SOLVER_CHECK_EVERY', '50'))
QP_SOLVER_RESTART_EVERY = int(os.getenv('QP_SOLVER_RESTART_EVERY', '200'))
QP_SOLVER_ORDERING = os.getenv('QP_SOLVER_ORDERING', 'amd')  # amd, rcm, natural
QP_SOLVER_SEED = int(os.getenv('QP_SOLVER_SEED', '0'))

# Benchmark corpus (Maros-Meszaros QPS files)
QPS_CORPUS_DIR = os.getenv('QPS_CORPUS_DIR')
QP_BENCH_WORKERS = int(os.getenv('QP_BENCH_WORKERS', '1'))

QP_LOG_LEVEL = os.getenv('QP_LOG_LEVEL', 'INFO')

# Logging
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': 'WARNING',
    },
    'loggers': {
        'qpsolver': {
            'handlers': ['console'],
            'level': QP_LOG_LEVEL,
            'propagate': False,
        },
    },
}
