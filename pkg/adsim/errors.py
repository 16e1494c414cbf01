# coding: utf-8
"""Exception hierarchy shared across the package.

Each exception also derives from the closest builtin so callers may catch
either the specific class or the generic one.
"""

from __future__ import annotations

from typing import Optional


class AdsimError(Exception):
    """Base class for every error raised by adsim."""


class ConfigurationError(AdsimError, ValueError):
    """Invalid configuration value or unknown configuration key."""


class ShapeError(AdsimError, ValueError):
    """Dimension mismatch between arrays, weights, and samples."""


class DomainError(AdsimError, ValueError):
    """An operation was called outside its domain (e.g. an empty set)."""


class BudgetError(AdsimError, ValueError):
    """A constructed perturbation would leave the l-infinity ball."""

    def __init__(self, message: str, measured_linf: float) -> None:
        super().__init__(message)
        self.measured_linf = measured_linf


class DivergenceError(AdsimError, ArithmeticError):
    """Training produced a non-finite or exploding loss or weight."""

    def __init__(
        self, message: str, iteration: int, value: Optional[float] = None
    ) -> None:
        super().__init__(message)
        self.iteration = iteration
        self.value = value


class PropertyViolation(AdsimError, AssertionError):
    """A runtime invariant of the training dynamics does not hold."""

    def __init__(self, message: str, iteration: Optional[int] = None) -> None:
        super().__init__(message)
        self.iteration = iteration
