"""Exceptions raised by the solver library."""


class SolverError(Exception):
    """Base class for every error raised by the solver library."""


class ConfigError(SolverError, ValueError):
    """A parameter is outside its admissible range."""


class DimensionMismatch(SolverError, ValueError):
    """Operand shapes do not agree."""


class IndefiniteMatrix(SolverError):
    """A pivot stayed non-positive after static regularization."""

    def __init__(self, pivot: int, value: float):
        self.pivot = pivot
        self.value = value
        super().__init__(f"Matrix is not positive semidefinite: pivot {pivot} = {value:.3e}")


class InfeasibleBounds(SolverError, ValueError):
    """A lower bound exceeds its upper bound."""

    def __init__(self, index, lower: float, upper: float):
        self.index = index
        self.lower = lower
        self.upper = upper
        super().__init__(f"Infeasible bounds for {index}: lower {lower} > upper {upper}")


class ParseError(SolverError):
    """Malformed QPS input."""

    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class SubproblemError(SolverError):
    """A pADMM substep failed."""

    def __init__(self, step: str, cause: Exception):
        self.step = step
        super().__init__(f"{step} failed: {cause}")


class NumericalError(SolverError):
    """The iteration produced non-finite values."""
