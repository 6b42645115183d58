"""Shapley-based reward allocation for data-sharing coalitions."""

__version__ = "0.1.0"

from .allocation import is_stable, is_stable_bruteforce, optimal_outcome, proportional_payoff
from .game import Coalition, Game, check_monotonicity, game_from_table, game_from_valuation, load_game
from .shapley import ContributionVector, shapley_exact, shapley_monte_carlo, verify_axioms
from .suboptimal import DeviationSpec, SolverConfig, deviation, epsilon_bruteforce, epsilon_for, min_deviation_stable

__all__ = [
    "Coalition",
    "ContributionVector",
    "DeviationSpec",
    "Game",
    "SolverConfig",
    "check_monotonicity",
    "deviation",
    "epsilon_bruteforce",
    "epsilon_for",
    "game_from_table",
    "game_from_valuation",
    "is_stable",
    "is_stable_bruteforce",
    "load_game",
    "min_deviation_stable",
    "optimal_outcome",
    "proportional_payoff",
    "shapley_exact",
    "shapley_monte_carlo",
    "verify_axioms",
]
