"""Noisy machine-gunner vs. sniper duel: solver, payoffs, simulation, oracle.

Player I spends an infinitely divisible resource continuously, player II
fires integer shots; both observe all remaining resources at every moment.
The package tabulates the optimal-action threshold curves, evaluates the
game value and arbitrary plays, simulates strategy pairs, and cross-checks
everything against an independent discrete backward-induction oracle.
"""

__version__ = "0.1.0"

from .accuracy import (AccuracyFunction, DuelParameters, NormalizedDuel,
                       compose_through_inverse, normalize_p2, parse_accuracy)
from .payoff import (ConsumptionPath, Play, SniperSchedule,
                     continuous_success_prob, is_t_play, payoff,
                     simplest_t_plays, single_shot_success)
from .solver import (AccuracyCheckError, BracketError, CoverageError,
                     GameValue, SolverConfig, SolverError, TTable,
                     curve_floor, curve_slope, equilibrium_residual,
                     first_curve_resource, game_value, solve_game,
                     tabulate_first_curve)

__all__ = [
    "AccuracyFunction", "DuelParameters", "NormalizedDuel",
    "compose_through_inverse", "normalize_p2", "parse_accuracy",
    "ConsumptionPath", "Play", "SniperSchedule", "continuous_success_prob",
    "is_t_play", "payoff", "simplest_t_plays", "single_shot_success",
    "AccuracyCheckError", "BracketError", "CoverageError", "GameValue",
    "SolverConfig", "SolverError", "TTable", "curve_floor", "curve_slope",
    "equilibrium_residual", "first_curve_resource", "game_value",
    "solve_game", "tabulate_first_curve",
    "__version__",
]
