"""Strategically robust Wardrop equilibria of aggregative games."""

from .game import (
    ActionSpace,
    AffinePriceCost,
    AggregateSpace,
    GameInstance,
    PlayerClass,
    StrategyProfile,
    aggregate,
    nominal_cost,
    project_action,
    validate_game,
)
from .robust import RobustnessParams, augmented_cost, big_m, psi_p, robust_cost
from .equilibrium import (
    SolverOptions,
    SolveReport,
    price_of_anarchy,
    social_cost,
    solve_social_optimum,
    solve_srwe,
    solve_wardrop,
    verify_equilibrium,
)

__version__ = "0.1.0"
