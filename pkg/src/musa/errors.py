"""Exception types raised across the package."""


class MusaError(Exception):
    """Base class for all package errors."""


class PreconditionError(MusaError, ValueError):
    """An input violates an operation's documented precondition."""


class ConvergenceError(MusaError, ArithmeticError):
    """An iterative method hit its iteration cap.

    ``residual`` holds the last convergence measure (off-diagonal norm,
    unmixing delta, ...) so callers can judge how close it got.
    """

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


class DegenerateScaleError(MusaError, ValueError):
    """A column has zero (robust) scale or zero mean where division is needed."""

    def __init__(self, message: str, column: int | str | None = None):
        super().__init__(message)
        self.column = column


class FactorizationError(MusaError, ValueError):
    """A scale matrix could not be factored (not positive semidefinite)."""


class NumericError(MusaError, ArithmeticError):
    """A special-function evaluation failed to converge."""


class DeploymentError(MusaError, RuntimeError):
    """No connected random deployment was found within the redraw cap."""


class ParseError(MusaError, ValueError):
    """Malformed CSV, config or reference-moments input."""

    def __init__(self, message: str, line: int | None = None, column: int | str | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
        self.column = column
