"""Exception hierarchy shared by the library and the CLI exit codes."""


class MissingDigitsError(Exception):
    """Base class for all library errors."""


class DomainError(MissingDigitsError, ValueError):
    """An argument lies outside the domain of an operation (validation failure)."""


class NumericalError(MissingDigitsError, ArithmeticError):
    """A computation could not meet its requested tolerance."""


class ToleranceUnreachableError(NumericalError):
    pass


class PlanRejectedError(DomainError):
    """An experiment plan violates a precondition of the experiment it was given to."""


class EpsilonSelectionError(DomainError):
    """No epsilon satisfies the three conditions; ``condition`` names the first one violated."""

    def __init__(self, condition, message):
        super().__init__(message)
        self.condition = condition


class DegenerateMeasureWarning(UserWarning):
    """Raised (as a warning) for single-digit systems, whose measure is a Dirac mass."""


class ConfigError(DomainError):
    """A run configuration failed to parse or validate; the message names the field."""
