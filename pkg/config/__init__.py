"""Config package for the QP solver."""
