"""Exception hierarchy shared by all modules."""


class BlowupLabError(Exception):
    """Base class for every error raised by the package."""


class InputError(BlowupLabError, ValueError):
    """Invalid or non-finite input values."""


class DomainError(BlowupLabError, ValueError):
    """Argument outside the domain of a mathematical operation."""


class AdmissibilityError(BlowupLabError):
    """The initial-data moment lies on (or too near) the forbidden ray {-rho*lambda}."""


class ConfigError(BlowupLabError):
    """Malformed or incomplete run configuration."""


class QuadratureError(BlowupLabError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class NoFiniteBoundError(BlowupLabError):
    """The differential inequality yields no finite lifespan bound."""


class DomainTooSmallError(BlowupLabError):
    """The truncated radial domain leaked mass through its outer boundary."""

    def __init__(self, message, r_max=None, leak=None):
        super().__init__(message)
        self.r_max = r_max
        self.leak = leak


class HorizonError(BlowupLabError):
    """A trajectory does not cover the time window a functional needs."""


class InvariantError(BlowupLabError):
    """An internal numerical invariant was violated."""


class FitError(BlowupLabError):
    """Too few or unsuitable records for a scaling fit."""
