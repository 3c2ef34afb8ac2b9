"""Exception hierarchy shared by every df-lab module."""

from typing import Optional


class DFLabError(Exception):
    """Base class for all df-lab errors."""


class DomainError(DFLabError, ValueError):
    """Input outside the domain of an operation (time range, s.p.d., shapes)."""


class ConfigError(DFLabError, ValueError):
    """Invalid or unknown configuration."""


class NumericalError(DFLabError, ArithmeticError):
    """A computation produced a non-finite or otherwise invalid value."""

    def __init__(self, message: str, step: Optional[int] = None):
        """
        Initialize numerical error.

        Args:
            message: Human readable description
            step: Index of the failing integration / optimizer step, if any
        """
        self.step = step
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)


class IntegrationError(NumericalError):
    """Non-finite state inside an ODE integrator."""


class TrainingError(NumericalError):
    """Training diverged (non-finite loss or parameters)."""
