"""Configure Django before test collection (no pytest-django dependency)."""

import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'config.settings')
django.setup()
