"""Payoffs in the duplicable-model game.

Each player can be handed up to ``v(N)`` because a trained model is copied,
not split.  A payoff is stable when every coalition contains someone already
paid at least that coalition's value; on a monotone game this reduces to
``n`` prefix checks in ascending payoff order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGame, NonpositiveAlpha, NotMonotone, ValidationError
from .game import Game, is_monotone, player_order, prefix_values
from .shapley import as_phi


def stability_tol(game: Game) -> float:
    return 1e-12 * max(1.0, abs(game.grand_value))


def as_payoff(x, n: int | None = None) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1 or not np.all(np.isfinite(arr)):
        raise ValidationError("payoff vector must be a finite 1-D array")
    if n is not None and arr.size != n:
        raise ValidationError(f"payoff vector has {arr.size} entries for {n} players")
    if np.any(arr < 0):
        raise ValidationError("payoffs must be nonnegative")
    return arr


def require_monotone(game: Game) -> None:
    if not is_monotone(game):
        raise NotMonotone("the prefix shortcut needs a monotone game; use the brute-force check instead")


@dataclass(frozen=True)
class StabilityReport:
    stable: bool
    order: np.ndarray
    bounds: np.ndarray
    margins: np.ndarray
    first_violation: int | None


@dataclass(frozen=True)
class OptimalOutcome:
    exists: bool
    proportional: np.ndarray
    alpha: float
    order: np.ndarray
    bounds: np.ndarray
    violations: tuple[int, ...]

    @property
    def x(self) -> np.ndarray | None:
        """The optimal payoff, or None when the proportional candidate is unstable."""
        return self.proportional if self.exists else None


def proportional_payoff(phi, alpha: float) -> np.ndarray:
    if not alpha > 0:
        raise NonpositiveAlpha(f"alpha must be positive, got {alpha}")
    p = as_phi(phi)
    # round-off can leave a null player's exact contribution at -1e-17
    tol = 1e-12 * max(1.0, float(np.max(np.abs(p), initial=0.0)))
    if np.any(p < -tol):
        raise ValidationError("proportional payoffs need nonnegative contributions")
    return alpha * np.maximum(p, 0.0)


def _stability(game: Game, x: np.ndarray, order: np.ndarray) -> StabilityReport:
    bounds = prefix_values(game, order)
    margins = x[order] - bounds
    bad = np.flatnonzero(margins < -stability_tol(game))
    first = int(bad[0]) if bad.size else None
    return StabilityReport(first is None, order, bounds, margins, first)


def is_stable(game: Game, x) -> StabilityReport:
    x = as_payoff(x, game.n)
    require_monotone(game)
    return _stability(game, x, player_order(x))


def coalition_max_payoff(x: np.ndarray) -> np.ndarray:
    """``max_{k in C} x_k`` for every mask C (``-inf`` for the empty set)."""
    out = np.full(1 << x.size, -np.inf)
    for i, xi in enumerate(x):
        lo = 1 << i
        out[lo : 2 * lo] = np.maximum(out[:lo], xi)
    return out


def is_stable_bruteforce(game: Game, x) -> bool:
    """Check every nonempty coalition directly; works on any game."""
    x = as_payoff(x, game.n)
    best = coalition_max_payoff(x)
    return bool(np.all(best[1:] >= game.values[1:] - stability_tol(game)))


def optimal_outcome(game: Game, phi) -> OptimalOutcome:
    """The unique stable and proportional payoff, if there is one.

    The candidate scales contributions so the largest contributor gets
    ``v(N)``; it is optimal iff it clears each prefix bound in ascending
    contribution order.
    """
    p = as_phi(phi)
    if p.size != game.n:
        raise ValidationError(f"{p.size} contributions for {game.n} players")
    require_monotone(game)
    top = float(p.max())
    if not top > 0:
        raise DegenerateGame("all contributions are zero; no proportional scaling exists")
    alpha = game.grand_value / top
    x = proportional_payoff(p, alpha)
    report = _stability(game, x, player_order(p))
    violations = tuple(int(k) for k in np.flatnonzero(report.margins < -stability_tol(game)))
    return OptimalOutcome(not violations, x, alpha, report.order, report.bounds, violations)
