"""Fallback allocations when no stable and proportional payoff exists.

Two routes:

* keep proportionality and certify how far from stable it is (the smallest
  uniform exit penalty ``epsilon`` that makes it stable), or
* keep stability and pick the payoff that deviates least from proportional.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .allocation import (
    as_payoff,
    coalition_max_payoff,
    require_monotone,
    stability_tol,
)
from .errors import InfeasibleSideConstraints, NoAdmissiblePairs, ValidationError
from .game import Game, player_order, prefix_values
from .shapley import as_phi


@dataclass(frozen=True)
class StabilityGaps:
    """Shortfalls below the prefix bounds, listed in ascending payoff order."""

    order: np.ndarray
    bounds: np.ndarray
    d: np.ndarray

    def by_player(self) -> np.ndarray:
        out = np.empty_like(self.d)
        out[self.order] = self.d
        return out


@dataclass(frozen=True)
class EpsilonCertificate:
    epsilon: float
    binding_position: int
    binding_player: int


def stability_gaps(game: Game, x) -> StabilityGaps:
    x = as_payoff(x, game.n)
    require_monotone(game)
    order = player_order(x)
    bounds = prefix_values(game, order)
    d = np.maximum(bounds - x[order], 0.0)
    return StabilityGaps(order, bounds, d)


def epsilon_for(game: Game, x) -> EpsilonCertificate:
    gaps = stability_gaps(game, x)
    k = int(np.argmax(gaps.d))
    return EpsilonCertificate(float(gaps.d[k]), k, int(gaps.order[k]))


def epsilon_bruteforce(game: Game, x) -> float:
    """Smallest epsilon >= 0 with ``max_{k in C} x_k >= v(C) - epsilon`` for all C."""
    x = as_payoff(x, game.n)
    best = coalition_max_payoff(x)
    return float(max(0.0, np.max(game.values[1:] - best[1:])))


# --------------------------------------------------------------- deviation


@dataclass(frozen=True)
class DeviationSpec:
    kind: str = "sum"
    p: float = 1.0

    def __post_init__(self):
        if self.kind not in ("sum", "max"):
            raise ValidationError(f"deviation kind must be 'sum' or 'max', got {self.kind!r}")
        if not self.p >= 1:
            raise ValidationError(f"deviation exponent p must be >= 1, got {self.p}")


def tie_tol(phi: np.ndarray) -> float:
    return 1e-9 * max(1.0, float(np.max(np.abs(phi))) if phi.size else 1.0)


def _deviation_batch(p: np.ndarray, X: np.ndarray, spec: DeviationSpec) -> np.ndarray:
    """Deviation of every row of ``X`` (shape ``(k, n)``) from ``p``."""
    n = p.size
    live = p > tie_tol(p)
    ratio_phi = np.divide(p[:, None], p[None, :], out=np.zeros((n, n)), where=live[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio_x = X[:, :, None] / X[:, None, :]
    ok = live[None, None, :] & (X[:, None, :] > 0) & ~np.eye(n, dtype=bool)[None]
    terms = np.where(ok, np.abs(ratio_phi[None] - ratio_x), 0.0)
    if spec.kind == "max":
        return terms.max(axis=(1, 2))
    if spec.p == 1:
        return terms.sum(axis=(1, 2))
    return (terms**spec.p).sum(axis=(1, 2)) ** (1.0 / spec.p)


def deviation(phi, x, spec: DeviationSpec = DeviationSpec()) -> float:
    """Pairwise proportionality violation ``|phi_i/phi_j - x_i/x_j|``.

    Ordered pairs ``i != j`` are used, skipping any pair whose denominator
    player has zero contribution or zero payoff.
    """
    p = as_phi(phi)
    x = as_payoff(x, p.size)
    if p.size == 1:
        return 0.0
    live = (p > tie_tol(p)) & (x > 0)
    if not live.any():
        raise NoAdmissiblePairs("no player has both a positive contribution and a positive payoff")
    return float(_deviation_batch(p, x[None, :], spec)[0])


# ------------------------------------------------------------------ solver


@dataclass(frozen=True)
class SolverConfig:
    starts: int = 8
    max_iters: int = 200
    seed: int = 0
    tol: float = 1e-12
    grid: int = 33
    zoom_rounds: int = 4
    alpha_grid: int = 256

    def __post_init__(self):
        if self.starts < 1 or self.max_iters < 1 or self.grid < 3 or self.alpha_grid < 2:
            raise ValidationError(f"invalid solver config {self}")


@dataclass(frozen=True)
class StableAllocation:
    x: np.ndarray
    objective: float
    baseline_x: np.ndarray
    baseline_objective: float
    baseline_alpha: float
    order: np.ndarray
    bounds: np.ndarray
    binding: tuple[int, ...]
    relaxed_null: bool = False
    start_objectives: tuple[float, ...] = field(default=())


@dataclass
class _Problem:
    """Stable payoffs with the side constraints, reduced to one variable per
    tie group of equal contributions (groups listed in ascending order)."""

    phi: np.ndarray
    group_of: np.ndarray  # player -> group
    group_phi: np.ndarray  # largest contribution within each group
    lo: np.ndarray
    hi: float
    fixed: np.ndarray  # bool per group
    spec: DeviationSpec

    def expand(self, Y: np.ndarray) -> np.ndarray:
        return Y[..., self.group_of]

    def objective(self, Y: np.ndarray) -> np.ndarray:
        return _deviation_batch(self.phi, np.atleast_2d(self.expand(Y)), self.spec)


def _build_problem(game: Game, phi: np.ndarray, spec: DeviationSpec, relax_null: bool):
    order = player_order(phi)
    bounds = prefix_values(game, order)
    tol = tie_tol(phi)
    groups: list[list[int]] = []
    for pos, player in enumerate(order):
        if groups and abs(phi[player] - phi[order[groups[-1][0]]]) <= tol:
            groups[-1].append(pos)
        else:
            groups.append([pos])
    G = len(groups)
    group_of = np.empty(phi.size, dtype=np.int64)
    group_phi = np.empty(G)
    lo = np.empty(G)
    fixed = np.zeros(G, dtype=bool)
    vN = game.grand_value
    floor = 1e-9 * vN
    null_relaxed = False
    for g, positions in enumerate(groups):
        members = order[positions]
        group_of[members] = g
        group_phi[g] = phi[members].max()
        lb = float(bounds[positions].max())
        if group_phi[g] <= tol:
            if lb > stability_tol(game) and not relax_null:
                raise InfeasibleSideConstraints(
                    f"null player(s) {sorted(members.tolist())} need payoff >= {lb:g} for stability, "
                    "but fairness pins them to 0; pass relax_null=True to drop that constraint"
                )
            if lb > stability_tol(game):
                null_relaxed = True
                lo[g] = lb
            else:
                lo[g] = 0.0
                fixed[g] = True
        else:
            lo[g] = max(lb, floor)
    fixed[G - 1] = True  # the top group's bound is v(N), which is also its cap
    lo[G - 1] = vN
    return _Problem(phi, group_of, group_phi, lo, vN, fixed, spec), order, bounds, null_relaxed


def _clamp_baseline(prob: _Problem, alphas: np.ndarray) -> np.ndarray:
    """``min(v(N), max(alpha * phi_g, bound_g))`` per group, one row per alpha."""
    Y = np.maximum(alphas[:, None] * prob.group_phi[None, :], prob.lo[None, :])
    Y = np.minimum(Y, prob.hi)
    Y[:, prob.fixed] = prob.lo[prob.fixed]
    return Y


def _alpha_range(prob: _Problem) -> tuple[float, float]:
    live = prob.group_phi > tie_tol(prob.phi)
    a0 = prob.hi / prob.group_phi.max()
    a1 = float(np.max(prob.lo[live] / prob.group_phi[live])) if live.any() else a0
    return a0, max(a0, a1)


def _line_search(prob: _Problem, y: np.ndarray, idx: np.ndarray, lo: float, hi: float, f0: float, cfg: SolverConfig):
    """Best common value for the groups ``idx`` within ``[lo, hi]``."""
    best_t, best_f = float(y[idx[0]]), f0
    a, b = lo, hi
    for r in range(cfg.zoom_rounds + 1):
        pts = np.linspace(a, b, cfg.grid if r == 0 else 17)
        Y = np.repeat(y[None, :], pts.size, axis=0)
        Y[:, idx] = pts[:, None]
        F = prob.objective(Y)
        k = int(np.argmin(F))
        if F[k] < best_f:
            best_t, best_f = float(pts[k]), float(F[k])
        a, b = pts[max(k - 1, 0)], pts[min(k + 1, pts.size - 1)]
        if b - a <= 1e-15 * max(1.0, prob.hi):
            break
    return best_t, best_f


def _runs(y: np.ndarray, free: np.ndarray) -> list[np.ndarray]:
    """Maximal blocks of consecutive free groups sharing one value."""
    out, cur = [], []
    for g in range(y.size):
        if free[g] and cur and y[g] == y[cur[-1]]:
            cur.append(g)
        else:
            if len(cur) > 1:
                out.append(np.array(cur))
            cur = [g] if free[g] else []
    if len(cur) > 1:
        out.append(np.array(cur))
    return out


def _descend(prob: _Problem, y: np.ndarray, cfg: SolverConfig) -> tuple[np.ndarray, float]:
    y = y.copy()
    f = float(prob.objective(y)[0])
    free = ~prob.fixed
    G = y.size
    for _ in range(cfg.max_iters):
        improved = False
        moves = [np.array([g]) for g in range(G) if free[g]] + _runs(y, free)
        for idx in moves:
            g0, g1 = idx[0], idx[-1]
            lo = max(prob.lo[idx].max(), y[g0 - 1] if g0 > 0 else 0.0)
            hi = min(prob.hi, y[g1 + 1] if g1 + 1 < G else prob.hi)
            if hi <= lo:
                continue
            t, ft = _line_search(prob, y, idx, lo, hi, f, cfg)
            if ft < f - cfg.tol * max(1.0, abs(f)):
                y[idx] = t
                f = ft
                improved = True
        if not improved:
            break
    return y, f


def _random_feasible(prob: _Problem, rng: np.random.Generator) -> np.ndarray:
    u = rng.uniform(prob.lo, prob.hi)
    u[prob.fixed] = prob.lo[prob.fixed]
    return np.minimum(np.maximum.accumulate(np.maximum(u, prob.lo)), prob.hi)


def min_deviation_stable(
    game: Game,
    phi,
    spec: DeviationSpec = DeviationSpec(),
    solver: SolverConfig = SolverConfig(),
    *,
    relax_null: bool = False,
) -> StableAllocation:
    """Stable payoff closest to proportional under ``spec``.

    Constraints: every prefix bound, zero for null players, equal payoffs for
    equal contributions, payoffs nondecreasing in contribution, and the
    individual cap ``v(N)``.  The objective is nonconvex, so this runs
    deterministic multi-start coordinate descent seeded from the clamp
    baseline ``min(v(N), max(alpha * phi_i, bound_i))`` over a grid of alphas;
    the result never scores worse than the best baseline point.
    """
    p = as_phi(phi)
    if p.size != game.n:
        raise ValidationError(f"{p.size} contributions for {game.n} players")
    require_monotone(game)
    if not p.max() > 0:
        raise NoAdmissiblePairs("all contributions are zero")
    prob, order, bounds, relaxed = _build_problem(game, p, spec, relax_null)

    a0, a1 = _alpha_range(prob)
    alphas = np.linspace(a0, a1, solver.alpha_grid)
    base_Y = _clamp_baseline(prob, alphas)
    base_F = prob.objective(base_Y)
    kb = int(np.argmin(base_F))

    starts = [base_Y[kb]]
    n_spread = (solver.starts - 1) // 2
    if n_spread:
        picks = np.linspace(0, alphas.size - 1, n_spread + 2)[1:-1].round().astype(int)
        starts.extend(base_Y[k] for k in picks)
    rng = np.random.default_rng(solver.seed)
    while len(starts) < solver.starts:
        starts.append(_random_feasible(prob, rng))

    results = [_descend(prob, y0, solver) for y0 in starts]
    best_y, best_f = min(results, key=lambda r: (r[1], tuple(prob.expand(r[0]))))
    if best_f > base_F[kb]:
        best_y, best_f = base_Y[kb], float(base_F[kb])
    x = prob.expand(best_y)
    tol = stability_tol(game)
    binding = tuple(int(k) for k in np.flatnonzero(np.abs(x[order] - bounds) <= tol))
    return StableAllocation(
        x=x,
        objective=float(best_f),
        baseline_x=prob.expand(base_Y[kb]),
        baseline_objective=float(base_F[kb]),
        baseline_alpha=float(alphas[kb]),
        order=order,
        bounds=bounds,
        binding=binding,
        relaxed_null=relaxed,
        start_objectives=tuple(float(r[1]) for r in results),
    )
