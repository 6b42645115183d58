import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_monotone_game
from fairshare.allocation import is_stable_bruteforce, optimal_outcome
from fairshare.errors import InfeasibleSideConstraints, NoAdmissiblePairs, NotMonotone, ValidationError
from fairshare.game import Game, game_from_table
from fairshare.shapley import shapley_exact
from fairshare.suboptimal import (
    DeviationSpec,
    SolverConfig,
    deviation,
    epsilon_bruteforce,
    epsilon_for,
    min_deviation_stable,
    stability_gaps,
)


def deviation_loops(phi, x, kind="sum", p=1.0):
    terms = [
        abs(phi[i] / phi[j] - x[i] / x[j])
        for i, j in itertools.permutations(range(len(phi)), 2)
        if phi[j] > 1e-9 and x[j] > 0
    ]
    if kind == "max":
        return max(terms)
    return sum(t**p for t in terms) ** (1 / p)


def test_two_player_epsilon(two_player):
    out = optimal_outcome(two_player, shapley_exact(two_player))
    cert = epsilon_for(two_player, out.proportional)
    assert cert.epsilon == pytest.approx(0.9 - 9 / 11, abs=1e-15)
    assert cert.binding_player == 0
    assert epsilon_bruteforce(two_player, out.proportional) == pytest.approx(cert.epsilon, abs=1e-15)


def test_gaps_by_player(trio):
    gaps = stability_gaps(trio, [1.5, 1.5, 1.5])
    assert gaps.order.tolist() == [0, 1, 2]
    np.testing.assert_allclose(gaps.d, [0, 0.5, 1.5])
    np.testing.assert_allclose(gaps.by_player(), [0, 0.5, 1.5])


def test_two_player_solver(two_player):
    phi = shapley_exact(two_player).phi
    sol = min_deviation_stable(two_player, phi)
    np.testing.assert_allclose(sol.x, [0.9, 1.0], atol=1e-12)
    # |phi_0/phi_1 - 0.9| + |phi_1/phi_0 - 1/0.9|
    assert sol.objective == pytest.approx(abs(9 / 11 - 0.9) + abs(11 / 9 - 1 / 0.9), abs=1e-12)
    assert is_stable_bruteforce(two_player, sol.x)


def test_deviation_matches_loops(rng):
    for _ in range(30):
        n = int(rng.integers(2, 7))
        phi = rng.uniform(0, 3, n)
        phi[rng.random(n) < 0.2] = 0.0
        phi[0] = max(phi[0], 0.1)
        x = rng.uniform(0.1, 3, n)
        for kind, p in (("sum", 1.0), ("sum", 2.0), ("max", 1.0)):
            assert deviation(phi, x, DeviationSpec(kind, p)) == pytest.approx(deviation_loops(phi, x, kind, p), rel=1e-12)


def test_deviation_zero_for_proportional():
    assert deviation([1, 2, 3], [2, 4, 6]) == pytest.approx(0, abs=1e-15)


def test_deviation_edge_cases():
    assert deviation([2.0], [1.0]) == 0.0
    with pytest.raises(NoAdmissiblePairs):
        deviation([0.0, 0.0], [1.0, 1.0])
    with pytest.raises(ValidationError):
        DeviationSpec("mean")
    with pytest.raises(ValidationError):
        DeviationSpec("sum", 0.5)


def test_null_player_side_constraint():
    g = game_from_table(2, {"0": 0, "1": 1, "0,1": 1})
    sol = min_deviation_stable(g, shapley_exact(g).phi)
    assert sol.x.tolist() == [0.0, 1.0]
    # a zero contribution supplied for a player whose singleton is worth 1:
    # stability needs x_0 >= 1 while the null constraint pins x_0 = 0
    with pytest.raises(InfeasibleSideConstraints):
        min_deviation_stable(Game([0, 1.0, 1.0, 1.0]), [0.0, 1.0])
    relaxed = min_deviation_stable(Game([0, 1.0, 1.0, 1.0]), [0.0, 1.0], relax_null=True)
    assert relaxed.relaxed_null and is_stable_bruteforce(Game([0, 1.0, 1.0, 1.0]), relaxed.x)


def test_solver_rejects_non_monotone():
    g = game_from_table(2, {"0": 2, "1": 1, "0,1": 1.5})
    with pytest.raises(NotMonotone):
        min_deviation_stable(g, [1, 0.5])


def test_solver_deterministic(rng):
    g = random_monotone_game(rng, 6, "max")
    phi = shapley_exact(g).phi
    a = min_deviation_stable(g, phi, solver=SolverConfig(seed=4))
    b = min_deviation_stable(g, phi, solver=SolverConfig(seed=4))
    assert a.x.tobytes() == b.x.tobytes()


def test_solver_on_optimal_game_returns_proportional(trio):
    sol = min_deviation_stable(trio, shapley_exact(trio).phi)
    np.testing.assert_allclose(sol.x, [3, 3, 3])
    assert sol.objective == pytest.approx(0, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_epsilon_matches_bruteforce(n, seed):
    rng = np.random.default_rng(seed)
    g = random_monotone_game(rng, n)
    x = rng.uniform(0, g.grand_value + 1e-9, n)
    assert epsilon_for(g, x).epsilon == pytest.approx(epsilon_bruteforce(g, x), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_epsilon_is_smallest_fix(n, seed):
    # adding epsilon to every payoff restores stability, and nothing smaller does
    rng = np.random.default_rng(seed)
    g = random_monotone_game(rng, n)
    x = rng.uniform(0, g.grand_value + 1e-9, n)
    eps = epsilon_for(g, x).epsilon
    assert is_stable_bruteforce(g, x + eps)
    if eps > 1e-9:
        assert not is_stable_bruteforce(g, x + 0.99 * eps)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**32 - 1), st.sampled_from([("sum", 1.0), ("sum", 2.0), ("max", 1.0)]))
def test_solver_output_is_feasible(n, seed, dev):
    rng = np.random.default_rng(seed)
    g = random_monotone_game(rng, n, rng.choice(["max", "coverage", "increments"]))
    phi = shapley_exact(g).phi
    if phi.max() <= 0:
        return
    try:
        sol = min_deviation_stable(g, phi, DeviationSpec(*dev), SolverConfig(starts=4))
    except InfeasibleSideConstraints:
        return
    assert is_stable_bruteforce(g, sol.x)
    assert np.all(sol.x <= g.grand_value + 1e-12)
    assert sol.objective <= sol.baseline_objective + 1e-12


def test_deviation_hand_values():
    assert deviation([1, 1], [1, 2]) == pytest.approx(1.5)
    assert deviation([1, 1], [1, 2], DeviationSpec("max")) == pytest.approx(1.0)


def test_deviation_skips_zero_denominators():
    # pairs with phi_j = 0 or x_j = 0 are left out, not treated as infinite
    assert deviation([0, 1, 2], [0, 1, 2]) == pytest.approx(0)
    assert deviation([1, 2], [0, 4]) == pytest.approx(abs(0.5 - 0.0))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_epsilon_sets_grow(n, seed):
    # anything epsilon-stable stays stable for a larger epsilon
    rng = np.random.default_rng(seed)
    g = random_monotone_game(rng, n)
    e1, e2 = sorted(rng.uniform(0, g.grand_value + 1e-9, 2))
    for _ in range(10):
        x = rng.uniform(0, g.grand_value + 1e-9, n)
        if epsilon_bruteforce(g, x) <= e1:
            assert epsilon_bruteforce(g, x) <= e2
