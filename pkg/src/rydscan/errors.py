"""Exception types shared across the package."""


class RydscanError(Exception):
    """Base class for all package errors."""


class DomainError(RydscanError, ValueError):
    """An argument is outside the domain of the operation."""


class NumericError(RydscanError, ArithmeticError):
    """A numerical procedure failed (non-convergence, degenerate data)."""


class QuadratureError(NumericError):
    """Velocity quadrature did not reach the requested tolerance.

    ``index`` and ``delta_c0`` identify the worst grid point.
    """

    def __init__(self, message, index=None, delta_c0=None, rel_error=None):
        super().__init__(message)
        self.index = index
        self.delta_c0 = delta_c0
        self.rel_error = rel_error


class FitError(NumericError):
    """Least-squares peak fit did not converge."""

    def __init__(self, message, rms_residual=None):
        super().__init__(message)
        self.rms_residual = rms_residual


class ScanError(NumericError):
    """A scan point failed; ``index`` is the flat row-major scan index."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ParseError(RydscanError, ValueError):
    """A file could not be parsed; the message names the line or field."""
