"""Exception and warning types shared across the engine."""

from __future__ import annotations


class CarbonRiskError(Exception):
    """Base class for all engine errors."""


class NonStationary(CarbonRiskError):
    """A feedback matrix has an eigenvalue too close to or beyond the unit circle."""


class SingularSystem(CarbonRiskError):
    """A linear system required by the model is numerically singular."""


class CholeskyFailure(CarbonRiskError):
    """A covariance matrix is not positive semidefinite within tolerance."""


class PriceDominance(CarbonRiskError):
    """Carbon costs absorb all production revenue (some tau*delta >= 1)."""


class SingularEquilibrium(CarbonRiskError):
    """The input-output equilibrium solve is ill-conditioned."""


class NotSummable(CarbonRiskError):
    """The discounted cash-flow series diverges (growth drift >= discount rate)."""


class ZeroDenominator(CarbonRiskError):
    """A calibration ratio has a zero or negative denominator."""


class RankDeficient(CarbonRiskError):
    """Regression design matrix is numerically collinear."""


class NoDefaults(CarbonRiskError):
    """The default history contains no defaulted obligor in any year."""


class BracketFailure(CarbonRiskError):
    """The likelihood grid scan found no interior maximum to refine."""


class SchemaError(CarbonRiskError):
    """An input table is missing required columns or has malformed values."""


class UnitError(CarbonRiskError):
    """An input value is outside its admissible unit range."""


class CoverageError(CarbonRiskError):
    """An input table has missing or invalid cells; message lists all of them."""


class DomainError(CarbonRiskError):
    """An argument is outside the mathematical domain of an operation."""


class WellPosednessError(CarbonRiskError):
    """A well-posedness inequality fails; risk computations are refused."""


class NonStationaryWarning(UserWarning):
    """A fitted feedback matrix is not stationary; downstream simulation will refuse it."""


class NonMonotoneWarning(UserWarning):
    """Intensity increments change sign; the decay fit used absolute values."""


class DegenerateFlatWarning(UserWarning):
    """A series is numerically constant; a degenerate curve was returned."""


class QuantileUndefinedWarning(UserWarning):
    """Too few tail paths for the requested quantile (M*(1-alpha) < 5)."""


class WellPosednessWarning(UserWarning):
    """A well-posedness inequality could not be verified or failed."""
