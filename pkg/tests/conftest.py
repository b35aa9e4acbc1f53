"""Shared builders for the test suite.

Most tests construct their own small objects; the fixtures here cover the
handful of combinations that many files need: a benign two-sector VAR, a
matching economy, and scenario builders with zero or geometric carbon
prices.
"""

from __future__ import annotations

import numpy as np
import pytest

from carbonrisk.economy import EconomyParams
from carbonrisk.productivity import VarParams
from carbonrisk.transition import (
    CarbonPriceSchedule,
    IntensityCurve,
    IntensitySet,
    TransitionScenario,
)


@pytest.fixture
def small_var() -> VarParams:
    return VarParams(
        mu=np.array([0.008, 0.004]),
        gamma=np.array([[0.30, 0.10], [0.05, 0.20]]),
        sigma=np.array([[4.0e-4, 5.0e-5], [5.0e-5, 2.5e-4]]),
        epsilon=1.0,
    )


@pytest.fixture
def small_econ() -> EconomyParams:
    return EconomyParams(
        psi=np.array([0.40, 0.35]),
        lam=np.array([[0.30, 0.20], [0.25, 0.40]]),
    )


def make_scenario(
    n_sectors: int,
    delta0: float,
    eta: float = 0.10,
    t_circ: int = 2021,
    t_star: int = 2030,
    y0: float = 1.0e-3,
    g0: float = -0.06,
    theta: float = 0.25,
    name: str = "test",
) -> TransitionScenario:
    """Scenario with one shared decay curve for every intensity cell."""
    curve = IntensityCurve(y0=y0, g0=g0, theta=theta, t_star=t_star - t_circ)
    kit = IntensitySet(
        tau=(curve,) * n_sectors,
        zeta=((curve,) * n_sectors,) * n_sectors,
        kappa=(curve,) * n_sectors,
    )
    schedule = CarbonPriceSchedule(delta0=delta0, t_circ=t_circ, t_star=t_star, eta=eta)
    return TransitionScenario(name=name, schedule=schedule, intensities=kit)


@pytest.fixture
def zero_price_scenario() -> TransitionScenario:
    """Two-sector scenario whose cost rates vanish identically."""
    return make_scenario(2, delta0=0.0, eta=0.0, name="zero")


@pytest.fixture
def priced_scenario() -> TransitionScenario:
    """Two-sector scenario with a growing price and decaying intensities."""
    return make_scenario(2, delta0=40.0, eta=0.12, y0=2.0e-3, name="priced")
