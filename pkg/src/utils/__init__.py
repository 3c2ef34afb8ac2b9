"""Shared utilities: errors, CSV/JSON output, thread fan-out."""

from .errors import ConfigError, DFLabError, DomainError, IntegrationError, NumericalError, TrainingError

__all__ = [
    'DFLabError',
    'DomainError',
    'ConfigError',
    'NumericalError',
    'IntegrationError',
    'TrainingError'
]
