"""Exception types raised across the package."""


class MfisError(Exception):
    """Base class for all package errors."""


class DomainError(MfisError, ValueError):
    """Argument lies outside the domain of a function."""


class DegenerateError(MfisError, ValueError):
    """Input data admit no well-defined estimate."""


class BoundaryShapeError(DegenerateError):
    """GPD shape estimate hit the -1/2 boundary; ``side`` names the tail."""

    def __init__(self, message, side=None):
        super().__init__(message)
        self.side = side


class QuadratureError(MfisError, RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class ConfigError(MfisError, ValueError):
    """Invalid scenario or CLI configuration."""
