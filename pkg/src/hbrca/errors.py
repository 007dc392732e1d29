"""Exception taxonomy shared across the package.

CLI exit codes map onto these: ConfigError -> 2, DataError -> 3,
NumericalError -> 4.
"""


class HbrcaError(Exception):
    """Base class for all package errors."""


class DimensionError(HbrcaError):
    """Array shapes do not satisfy an operation's contract."""


class ParameterError(HbrcaError):
    """A scalar argument is outside its valid range."""


class ConfigError(HbrcaError):
    """Run configuration is malformed or inconsistent."""


class DataError(HbrcaError):
    """Input data violates the corpus contract."""


class DegenerateInputError(DataError):
    """Input is structurally valid but degenerate (e.g. all-zero corpus)."""


class ParseError(DataError):
    """A corpus or config file failed to parse.

    Carries the 1-based line number when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericalError(HbrcaError):
    """A numeric invariant failed (non-finite value, divergence)."""


class InstabilityError(NumericalError):
    """Simulated dynamics blew up; suggests a smaller integration step."""


class AbsentGradientError(HbrcaError):
    """Gradient requested for a tensor not on the recorded path."""
