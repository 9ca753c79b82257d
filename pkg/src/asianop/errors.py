"""Exception hierarchy. The CLI maps each family to an exit code."""


class AsianopError(Exception):
    exit_code = 2


class ConfigError(AsianopError):
    """Malformed or invalid run configuration (exit code 1)."""

    exit_code = 1


class HypothesisError(ConfigError):
    """Model inputs violate an admission hypothesis such as (H1)."""


class DomainError(ValueError, AsianopError):
    """A point lies outside the domain where a quantity is defined."""

    exit_code = 1


class NumericalError(AsianopError):
    """A numerical procedure failed (exit code 2)."""

    exit_code = 2


class CalibrationError(NumericalError):
    def __init__(self, message, worst_point=None):
        super().__init__(message)
        self.worst_point = worst_point


class ConvergenceError(NumericalError):
    pass


class UnsupportedReductionError(ConfigError):
    pass


class ValidationFailure(AsianopError):
    """A validation or comparison check did not pass (exit code 3)."""

    exit_code = 3
