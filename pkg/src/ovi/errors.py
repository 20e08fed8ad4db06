"""Exception types shared across the package."""


class OviError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(OviError):
    """A source file row could not be interpreted.

    Carries the 1-based line number of the offending row when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(OviError):
    """Parsed data violates a structural invariant (monotonicity, OHLC order, ...)."""


class ConfigError(OviError):
    """A configuration value is out of range or inconsistent."""


class DomainError(OviError):
    """A numerical routine was called outside its mathematical domain."""


class NoSolutionError(OviError):
    """The requested root does not exist inside the admissible band."""


class SolverError(OviError):
    """An iterative solver failed to converge within its budget."""


class DimensionError(OviError):
    """Panels or series passed together are not aligned."""


class RescaleError(OviError):
    """Coefficient rescaling is undefined (all non-intercept weights zero)."""


class DegenerateFitError(OviError):
    """The sample has too little variation to support the requested fit."""
