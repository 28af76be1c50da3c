"""Exception types shared across the package."""

from __future__ import annotations


class TailcoverError(Exception):
    """Base class for package-specific errors."""


class DomainError(TailcoverError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class UndefinedMomentError(TailcoverError, ValueError):
    """A conditional moment does not exist (tail index >= 1)."""


class InvalidConfigError(TailcoverError, ValueError):
    """A configuration is internally inconsistent or unusable."""


class DataError(TailcoverError, ValueError):
    """Input data is missing, malformed, or empty after filtering."""


class FitError(TailcoverError, RuntimeError):
    """Maximum-likelihood fit failed to converge.

    Carries the best point found so far in ``best`` for diagnostics.
    """

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class OptimizationError(TailcoverError, RuntimeError):
    """Derivative-free search hit non-finite objective values.

    ``offending_thetas`` lists the grid points where the objective was
    not finite.
    """

    def __init__(self, message: str, offending_thetas=None):
        super().__init__(message)
        self.offending_thetas = list(offending_thetas or [])


class NoSolutionError(TailcoverError, ValueError):
    """A root-finding target is unattainable (e.g. premium above saturation)."""
