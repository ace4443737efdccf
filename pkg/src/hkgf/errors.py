"""Exception hierarchy."""


class HKGFError(Exception):
    """Base class for all package errors."""


class DomainError(HKGFError, ValueError):
    """An input lies outside the domain of an operation (e.g. a non-SPD matrix)."""


class ConfigError(HKGFError, ValueError):
    """Invalid run or operator configuration."""


class NumericalError(HKGFError, ArithmeticError):
    """Non-finite values or failed safeguards during a computation."""


class IntegrationError(NumericalError):
    """Time integration could not proceed (step-halving exhausted)."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class MonotonicityError(NumericalError):
    """The driving energy increased along an integrated gradient flow."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time
