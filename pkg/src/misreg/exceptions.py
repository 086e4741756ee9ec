"""Exception types raised by the estimation and simulation layers.

Everything derives from :class:`MisregError` so harness code can catch the
whole family in one clause while programming errors (TypeError, ValueError
from bad call signatures, and friends) still propagate.
"""

from __future__ import annotations

__all__ = [
    "MisregError",
    "SingularDesign",
    "NotConverged",
    "PerfectSeparation",
    "DegenerateVariance",
    "EmptyCompleteCase",
    "IllConditionedTheta",
    "DegenerateRanks",
    "SurrogateCollinear",
    "NotLinearFamily",
    "ConfigError",
]


class MisregError(Exception):
    """Base class for recoverable estimation and configuration failures."""


class SingularDesign(MisregError):
    """Design (or weighted design) matrix is numerically rank deficient.

    Parameters
    ----------
    message : str
        Human-readable description.
    condition : float, optional
        Reciprocal condition estimate that triggered the failure.
    """

    def __init__(self, message: str, condition: float | None = None):
        super().__init__(message)
        self.condition = condition


class NotConverged(MisregError):
    """Iterative solver exhausted its iteration budget."""

    def __init__(self, message: str, iterations: int | None = None):
        super().__init__(message)
        self.iterations = iterations


class PerfectSeparation(MisregError):
    """Logistic fit is diverging (separated data or a one-class response)."""


class DegenerateVariance(MisregError):
    """A requested standard error is zero or not finite."""


class EmptyCompleteCase(MisregError):
    """Too few observed rows to fit the requested model."""


class IllConditionedTheta(MisregError):
    """Tuning-matrix normal equations are too ill conditioned to solve.

    Raised internally; the weighted prediction-based estimator catches it
    and falls back to a scalar tuning value, recording a warning on the
    result instead of failing the fit.
    """


class DegenerateRanks(MisregError):
    """Rank-based transform received a constant vector."""


class SurrogateCollinear(MisregError):
    """Surrogate column lies in the span of the design columns."""


class NotLinearFamily(MisregError):
    """Estimator is only defined for the linear outcome family."""


class ConfigError(MisregError):
    """Scenario or CLI configuration is malformed."""
