"""Exception hierarchy shared by the whole package."""


class BVError(Exception):
    """Base class for errors raised by bvhilbert."""


class ArgumentError(BVError, ValueError):
    """An argument violates a documented precondition."""


class CapabilityError(BVError):
    """The object lacks a capability needed by the operation (e.g. a Hessian)."""


class NumericError(BVError, ArithmeticError):
    """An iterative solver failed to converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class IntegrityError(BVError):
    """A Monte Carlo run produced too many invalid samples or diverged."""

    def __init__(self, message, count=None):
        super().__init__(message)
        self.count = count


class ConfigError(BVError, ValueError):
    """A run configuration failed validation."""
