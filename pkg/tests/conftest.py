import numpy as np
import pytest

from fairshare.game import Game, game_from_table

# acceptance criteria record (number, passed, detail) here for the summary
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def random_monotone_game(rng: np.random.Generator, n: int, kind: str | None = None) -> Game:
    """Monotone games from a few structurally different families."""
    kind = kind or rng.choice(["increments", "additive", "power", "max", "coverage"])
    masks = np.arange(1 << n)
    bits = (masks[:, None] >> np.arange(n)) & 1
    if kind == "increments":
        v = np.zeros(1 << n)
        for m in range(1, 1 << n):
            v[m] = max(v[m & ~(1 << i)] for i in range(n) if m >> i & 1) + rng.exponential(1.0) * (rng.random() < 0.7)
    elif kind == "additive":
        v = bits @ rng.uniform(0, 5, n)
    elif kind == "power":
        v = (bits @ rng.uniform(0, 3, n)) ** rng.uniform(0.4, 2.5)
    elif kind == "max":
        w = rng.uniform(0, 5, n)
        v = np.max(np.where(bits, w, 0.0), axis=1)
    else:
        # coverage: each player covers random weighted items
        items = rng.uniform(0, 2, 6)
        cover = rng.random((n, 6)) < 0.4
        covered = (bits[:, :, None] & cover[None]).any(axis=1)
        v = covered @ items
    v[0] = 0.0
    return Game(v)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def pair():
    return game_from_table(2, {"0": 1, "1": 1, "0,1": 2})


@pytest.fixture
def trio():
    return game_from_table(3, {"0": 1, "1": 1, "2": 1, "0,1": 2, "0,2": 2, "1,2": 2, "0,1,2": 3}, ["A", "B", "C"])


@pytest.fixture
def hospitals():
    single = {"0": 317, "1": 1369, "2": 2801}
    return game_from_table(
        3, {**single, "0,1": 1686, "0,2": 3118, "1,2": 4170, "0,1,2": 4487}, ["H1", "H2", "H3"]
    )


@pytest.fixture
def two_player():
    return game_from_table(2, {"0": 0.9, "1": 1.0, "0,1": 1.0})


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
