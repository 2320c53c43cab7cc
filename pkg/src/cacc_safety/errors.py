"""Exception types shared across the package."""


class CaccSafetyError(Exception):
    """Base class for all package errors."""


class InfeasibleGainsError(CaccSafetyError):
    """Controller gains fall outside the string-stable admissible region."""


class DistributionError(CaccSafetyError, ValueError):
    """A deceleration distribution violates one of its invariants."""


class DivergedRunError(CaccSafetyError):
    """A simulated trajectory blew up numerically."""

    def __init__(self, message, step=None, D0=None, iteration=None):
        super().__init__(message)
        self.step = step
        self.D0 = D0
        self.iteration = iteration


class BudgetExceededError(CaccSafetyError):
    """Exact enumeration would exceed the combination budget."""


class ConfigError(CaccSafetyError):
    """Malformed or inconsistent configuration."""
