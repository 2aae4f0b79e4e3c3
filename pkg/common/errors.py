"""
Exception hierarchy for STEADY.

main.py maps ConfigError to exit code 2 and NumericalError to exit code 3.
"""
from typing import Optional


class SteadyError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SteadyError, ValueError):
    """Invalid configuration file, CLI flag or scenario parameter."""


class DimensionError(SteadyError, ValueError):
    """Array shapes that do not fit together."""


class NumericalError(SteadyError, ArithmeticError):
    """A numerical routine could not produce a finite, valid result."""


class EigensolverError(NumericalError):
    """The Hermitian eigensolver did not converge."""


class IntegrationError(NumericalError):
    """The Lindblad time stepper produced a non-finite state."""

    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message)
        self.step = step


class FitDivergedError(NumericalError):
    """The cost became non-finite during a fit."""

    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch


class ArtifactError(SteadyError, OSError):
    """An output artifact could not be written."""
