"""Numerical lab for flat-rate pricing of multiple congestible service classes.

The package models a unit mass of users choosing among service classes that
differ only in price and congestion.  It solves the resulting self-selection
equilibria under pluggable congestion functions, evaluates social welfare
and provider profit, classifies congestion functions by whether splitting
capacity can pay, and searches monopoly price optima and duopoly
best-response equilibria.
"""

from . import congestion, duopoly, equilibrium, monopoly, population
from .congestion import (
    CongestionModel,
    classify_scaling,
    general_latency,
    global_monotone,
    latency,
    loss,
    monotone_case,
    outage,
    utilization,
    utilization_default,
)
from .duopoly import DuopolyScenario, ProviderStrategy
from .equilibrium import (
    Equilibrium,
    MarketScenario,
    cutoffs_from_prices,
    identical_price_equilibrium,
    prices_from_cutoffs,
    provider_profit,
    social_welfare,
    validate,
)
from .population import TypeDistribution, tabulated, tabulated_from_file, uniform

__version__ = "0.1.0"
