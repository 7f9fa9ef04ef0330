"""Manual scripts for the QP solver."""
