"""Exception types raised across the package."""


class CipsError(Exception):
    """Base class for all package-specific errors."""


class RatingLogError(CipsError, ValueError):
    """A rating-log file could not be parsed or failed validation.

    Carries the offending line number when one is known.
    """

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class ConfigError(CipsError, ValueError):
    """An invalid, unknown, or out-of-range configuration value."""


class ClusterCollapseError(CipsError, RuntimeError):
    """A cluster lost all of its assignment mass during training."""


class PropensityError(CipsError, ValueError):
    """Propensity estimation is undefined for the given data."""


class DivergenceError(CipsError, RuntimeError):
    """Training produced a non-finite loss."""
