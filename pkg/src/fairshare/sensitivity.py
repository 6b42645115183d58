"""Does an optimal outcome survive a new player or a shifted player?

Both questions are answered from quantities of the solved base game alone
(contributions, prefix bounds, slack ``d_k``), without revaluing coalitions.
``materialize_new_agent`` and ``apply_perturbation`` build the modified game
explicitly so the closed-form answers can be rechecked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .allocation import optimal_outcome
from .errors import BaseNotOptimal, MonotonicityBroken, OrderBroken, ValidationError
from .game import Game, check_monotonicity
from .shapley import as_phi

INF = math.inf
Interval = tuple[float, float]


@dataclass(frozen=True)
class Constraint:
    name: str
    player: int | None
    holds: bool
    vacuous: bool = False
    lhs: float | None = None
    rhs: float | None = None
    # delta half-line for perturbation families: ("ge" | "le", bound)
    bound: tuple[str, float] | None = None


@dataclass(frozen=True)
class FeasibilityVerdict:
    feasible: bool
    constraints: tuple[Constraint, ...]
    insertion_position: int | None = None
    window: Interval | None = None
    raw_interval: tuple[Interval, ...] | None = None
    interval: tuple[Interval, ...] | None = None
    extra: dict = field(default_factory=dict)

    @property
    def binding(self) -> list[str]:
        return [c.name for c in self.constraints if not c.holds]

    def contains(self, delta: float, tol: float = 0.0) -> bool:
        return any(lo - tol <= delta <= hi + tol for lo, hi in self.interval or ())


@dataclass(frozen=True)
class _Base:
    phi: np.ndarray
    order: np.ndarray
    pos: np.ndarray  # player -> position in ascending order
    bounds: np.ndarray  # by position
    d: np.ndarray  # by position, clipped at 0
    phi_max: float
    v_grand: float


def _solved_base(game: Game, phi) -> _Base:
    p = as_phi(phi)
    out = optimal_outcome(game, p)
    if not out.exists:
        raise BaseNotOptimal(f"base game has no optimal outcome (violations at positions {list(out.violations)})")
    order = out.order
    pos = np.empty_like(order)
    pos[order] = np.arange(order.size)
    d = np.maximum(out.proportional[order] - out.bounds, 0.0)
    return _Base(p, order, pos, out.bounds, d, float(p.max()), game.grand_value)


def _tol(base: _Base, extra: float = 0.0) -> float:
    return 1e-12 * max(1.0, abs(base.v_grand) + abs(extra))


# --------------------------------------------------------------- new agent


def admit_new_agent(game: Game, phi, phi_new: float) -> FeasibilityVerdict:
    """Optimality test after adding a player worth ``phi_new`` to every coalition.

    The newcomer is ranked after every existing player with contribution
    ``<= phi_new``.  When ``phi_new`` exceeds the old maximum the newcomer
    becomes the normaliser, so lower players' payoffs can fall and they are
    checked too; otherwise their bound is unchanged and their payoff rises.
    """
    if not phi_new >= 0:
        raise ValidationError(f"phi_new must be nonnegative, got {phi_new}")
    base = _solved_base(game, phi)
    p, order, bounds = base.phi, base.order, base.bounds
    top = max(base.phi_max, phi_new)
    scale = (base.v_grand + phi_new) / top
    k_new = int(np.sum(p <= phi_new))
    tol = _tol(base, phi_new)
    cons = []
    for k, player in enumerate(order):
        lhs = float(p[player] * scale)
        if k < k_new:
            rhs = float(bounds[k])
            auto = top == base.phi_max
            cons.append(Constraint(f"below[{player}]", int(player), lhs >= rhs - tol, vacuous=auto, lhs=lhs, rhs=rhs))
        else:
            rhs = float(bounds[k] + phi_new)
            cons.append(Constraint(f"above[{player}]", int(player), lhs >= rhs - tol, lhs=lhs, rhs=rhs))
    lhs = float(phi_new * scale)
    rhs = float((bounds[k_new - 1] if k_new else 0.0) + phi_new)
    cons.append(Constraint("new", None, lhs >= rhs - tol, lhs=lhs, rhs=rhs))
    return FeasibilityVerdict(
        all(c.holds for c in cons), tuple(cons), insertion_position=k_new, extra={"phi_max": top}
    )


def materialize_new_agent(game: Game, phi_new: float, label: str = "new") -> Game:
    """The ``n + 1`` player game with ``v'(C + new) = v(C) + phi_new``."""
    v = game.values
    return Game(np.concatenate([v, v + phi_new]), list(game.labels) + [label])


# ------------------------------------------------------------- perturbation


@dataclass(frozen=True)
class PerturbationQuery:
    player: int
    delta: float


def apply_perturbation(game: Game, player: int, delta: float, *, validate: bool = True) -> Game:
    """Shift every coalition containing ``player`` by ``delta``.

    With ``validate`` the result must stay monotone; without it the raw table
    is returned (possibly negative or non-monotone) for diagnostics.
    """
    if not 0 <= player < game.n:
        raise ValidationError(f"player {player} outside 0..{game.n - 1}")
    masks = np.arange(1 << game.n)
    shifted = game.values + delta * ((masks >> player) & 1)
    out = Game(shifted, game.labels, allow_negative=True)
    if validate:
        bad = check_monotonicity(out)
        if bad:
            c, i = bad[0]
            raise MonotonicityBroken(
                f"delta={delta:g} on player {player} breaks monotonicity: v({c}) > v({c | i})"
            )
        return Game(shifted, game.labels)
    return out


def min_marginal(game: Game, player: int) -> float:
    masks = np.arange(1 << game.n)
    base = masks[(masks >> player) & 1 == 0]
    return float(np.min(game.values[base | 1 << player] - game.values[base]))


def _windows(base: _Base, game: Game, i: int) -> tuple[Interval, float]:
    k = int(base.pos[i])
    p, order = base.phi, base.order
    lo = float(p[order[k - 1]] - p[i]) if k > 0 else -INF
    hi = float(p[order[k + 1]] - p[i]) if k + 1 < order.size else INF
    return (lo, hi), -min_marginal(game, i)


def _families(base: _Base, i: int) -> tuple[list[tuple], tuple[float, float, float] | None]:
    """Closed-form delta constraints for perturbing player ``i``.

    Returns ``(half_lines, quadratic)``: half-lines are
    ``(name, player, op, bound, vacuous)`` and ``quadratic`` is
    ``(a, b, c)`` for ``a d^2 + b d + c >= 0`` (None for the top player).
    """
    p, order, d, L = base.phi, base.order, base.d, base.bounds
    pm, vN = base.phi_max, base.v_grand
    k_i = int(base.pos[i])
    top = k_i == order.size - 1
    lines = []
    for k, player in enumerate(order):
        if player == i:
            continue
        phi_k, d_k = float(p[player]), float(d[k])
        if k < k_i and not top:
            if phi_k <= 1e-12 * pm:
                lines.append((f"below[{player}]", int(player), "ge", -INF, True))
            else:
                lines.append((f"below[{player}]", int(player), "ge", -pm / phi_k * d_k, False))
        elif k < k_i:
            # i is the largest contributor, so the normaliser phi_max moves with delta
            slope = phi_k - float(L[k])
            if slope > 0:
                lines.append((f"below_top[{player}]", int(player), "ge", -pm * d_k / slope, False))
            elif slope < 0:
                lines.append((f"below_top[{player}]", int(player), "le", pm * d_k / -slope, False))
            else:
                lines.append((f"below_top[{player}]", int(player), "ge", -INF, True))
        else:
            if phi_k >= pm:
                lines.append((f"above[{player}]", int(player), "le", INF, True))
            else:
                lines.append((f"above[{player}]", int(player), "le", d_k * pm / (pm - phi_k), False))
    if top:
        return lines, None
    return lines, (1.0, float(p[i]) + vN - pm, float(d[k_i]) * pm)


def _quadratic_roots(a: float, b: float, c: float) -> tuple[float, float] | None:
    disc = b * b - 4 * a * c
    if disc <= 0:
        return None
    q = -0.5 * (b + math.copysign(math.sqrt(disc), b))
    r1, r2 = q / a, (c / q if q != 0 else -b / a)
    return (min(r1, r2), max(r1, r2))


def _intersect(a: list[Interval], b: list[Interval]) -> list[Interval]:
    out = []
    for lo1, hi1 in a:
        for lo2, hi2 in b:
            lo, hi = max(lo1, lo2), min(hi1, hi2)
            if lo <= hi:
                out.append((lo, hi))
    return sorted(out)


def _solution_set(lines, quad) -> list[Interval]:
    s = [(-INF, INF)]
    for _, _, op, bound, vacuous in lines:
        if vacuous:
            continue
        s = _intersect(s, [(bound, INF)] if op == "ge" else [(-INF, bound)])
    if quad is not None:
        roots = _quadratic_roots(*quad)
        if roots is not None:
            s = _intersect(s, [(-INF, roots[0]), (roots[1], INF)])
    return s


def perturb_feasible(game: Game, phi, query: PerturbationQuery | int, delta: float | None = None) -> FeasibilityVerdict:
    """Optimality test after shifting one player's coalitions by ``delta``.

    Constraint families for a player below the top: a lower bound per
    weaker player, an upper bound per stronger non-top player, and a
    quadratic for the player itself.  For the top player the normaliser
    changes with ``delta``, giving one linear bound per weaker player and a
    trivially satisfied self-constraint.
    """
    if not isinstance(query, PerturbationQuery):
        query = PerturbationQuery(int(query), float(delta))
    i, dl = query.player, query.delta
    base = _solved_base(game, phi)
    (olo, ohi), mono_lo = _windows(base, game, i)
    tol = _tol(base, dl)
    if dl < olo - tol or dl > ohi + tol:
        raise OrderBroken(f"delta={dl:g} moves player {i} past a neighbour; allowed range [{olo:g}, {ohi:g}]")
    if dl < mono_lo - tol:
        raise MonotonicityBroken(f"delta={dl:g} makes the game non-monotone; need delta >= {mono_lo:g}")
    lines, quad = _families(base, i)
    cons = []
    for name, player, op, bound, vacuous in lines:
        holds = vacuous or (dl >= bound - tol if op == "ge" else dl <= bound + tol)
        cons.append(Constraint(name, player, holds, vacuous=vacuous, bound=(op, bound)))
    if quad is None:
        cons.append(Constraint(f"self_top[{i}]", i, True, vacuous=True))
    else:
        a, b, c = quad
        val = a * dl * dl + b * dl + c
        cons.append(Constraint(f"quadratic[{i}]", i, val >= -tol * max(1.0, base.phi_max), lhs=val, rhs=0.0))
    window = (max(olo, mono_lo), ohi)
    raw = _solution_set(lines, quad)
    return FeasibilityVerdict(
        all(c.holds for c in cons),
        tuple(cons),
        window=window,
        raw_interval=tuple(raw),
        interval=tuple(_intersect(raw, [window])),
        extra={"order_window": (olo, ohi), "monotone_lower": mono_lo, "quadratic": quad},
    )


def perturb_interval(game: Game, phi, player: int) -> FeasibilityVerdict:
    """The set of admissible shifts for ``player``, before and after windowing.

    ``feasible`` says whether the windowed set is nonempty (it always holds
    delta = 0 when the base outcome is optimal).
    """
    base = _solved_base(game, phi)
    (olo, ohi), mono_lo = _windows(base, game, player)
    lines, quad = _families(base, player)
    cons = tuple(Constraint(name, pl, True, vacuous=vac, bound=(op, b)) for name, pl, op, b, vac in lines)
    window = (max(olo, mono_lo), ohi)
    raw = _solution_set(lines, quad)
    windowed = _intersect(raw, [window])
    return FeasibilityVerdict(
        bool(windowed),
        cons,
        window=window,
        raw_interval=tuple(raw),
        interval=tuple(windowed),
        extra={"order_window": (olo, ohi), "monotone_lower": mono_lo, "quadratic": quad},
    )
