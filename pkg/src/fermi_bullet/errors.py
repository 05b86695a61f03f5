"""Exception types and the CLI exit-code mapping."""

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_LEAKAGE = 4


class InvalidParameterError(ValueError):
    """A physical or numerical parameter violates its documented constraints."""


class GridTooSmallError(InvalidParameterError):
    """The requested initial state does not fit on the grid with safe clearance."""


class ConfigError(ValueError):
    """Config text failed to parse or validate. Carries a line number when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalFailureError(RuntimeError):
    """Propagation produced a numerically invalid state (norm drift, NaN, ...)."""


class IntegrationDivergedError(NumericalFailureError):
    """A trajectory or ensemble left the numerically representable domain."""


class ChatteringError(NumericalFailureError):
    """Too many wall impacts inside one step (grazing incidence)."""


class LeakageAbortError(RuntimeError):
    """Probability reached the grid edge beyond the configured threshold."""


def exit_code_for(exc: BaseException) -> int:
    """Map an exception raised by any module to the documented CLI exit code."""
    if isinstance(exc, LeakageAbortError):
        return EXIT_LEAKAGE
    if isinstance(exc, NumericalFailureError):
        return EXIT_NUMERICAL
    if isinstance(exc, (ConfigError, InvalidParameterError)):
        return EXIT_CONFIG
    return 1
