"""Exception hierarchy shared across the package.

Each class maps to a CLI exit code (see cli.EXIT_CODES).
"""


class NetfdmError(Exception):
    """Base class for all package errors."""


class ParameterError(NetfdmError):
    """Invalid parameter values (probabilities out of range, bad exponents, ...)."""


class DataError(NetfdmError):
    """Invalid input data (negative weights, duplicate pairs, ...)."""


class ParseError(DataError):
    """Malformed input file; carries the offending line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class CapabilityError(NetfdmError):
    """A required closed-form oracle or bound is unavailable for this configuration."""


class ConvergenceError(NetfdmError):
    """An iterative solver failed to meet its tolerance."""


class ExperimentError(NetfdmError):
    """A Monte Carlo experiment could not produce a valid result."""
