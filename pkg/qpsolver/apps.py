"""App configuration for the QP solver."""

from django.apps import AppConfig


class QpSolverConfig(AppConfig):
    """QP solver app configuration."""

    name = 'qpsolver'
    verbose_name = 'Accelerated pADMM QP Solver'
