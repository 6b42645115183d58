"""Shapley contributions: exact subset enumeration, permutation sampling, and
brute-force checks of the fairness axioms."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from .game import DEFAULT_CAP, Game, check_cap
from .errors import ValidationError

MC_BATCH = 4096


@dataclass(frozen=True)
class ContributionVector:
    phi: np.ndarray
    provenance: str = "exact"
    samples: int | None = None
    seed: int | None = None
    stderr: np.ndarray | None = None

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=np.float64)
        if phi.ndim != 1 or not np.all(np.isfinite(phi)):
            raise ValidationError("contribution vector must be a finite 1-D array")
        object.__setattr__(self, "phi", phi)

    def __len__(self) -> int:
        return self.phi.size

    def __array__(self, dtype=None, copy=None):
        return self.phi if dtype is None else self.phi.astype(dtype)

    @property
    def exact(self) -> bool:
        return self.provenance == "exact"


def as_phi(phi) -> np.ndarray:
    if isinstance(phi, ContributionVector):
        return phi.phi
    return np.asarray(phi, dtype=np.float64)


def _popcount(masks: np.ndarray) -> np.ndarray:
    counts = np.zeros(masks.shape, dtype=np.int64)
    m = masks.copy()
    while np.any(m):
        counts += m & 1
        m >>= 1
    return counts


def shapley_weights(n: int) -> np.ndarray:
    """``w[s] = s! (n-s-1)! / n!`` for coalition sizes ``s = 0..n-1``.

    Written as ``1 / (n * C(n-1, s))`` so no factorial is ever formed.
    """
    return np.array([1.0 / (n * comb(n - 1, s)) for s in range(n)])


def shapley_exact(game: Game, *, cap: int = DEFAULT_CAP) -> ContributionVector:
    n = game.n
    check_cap(n, cap)
    v = game.values
    masks = np.arange(1 << n, dtype=np.int64)
    # size-n weight is never used (no base coalition contains everyone)
    w = np.append(shapley_weights(n), 0.0)[_popcount(masks)]
    phi = np.empty(n)
    for i in range(n):
        bit = 1 << i
        base = masks[(masks & bit) == 0]
        phi[i] = np.dot(w[base], v[base | bit] - v[base])
    return ContributionVector(phi)


def shapley_monte_carlo(game: Game, samples: int, seed: int) -> ContributionVector:
    """Permutation-sampling estimate with per-player standard errors.

    Permutations are drawn in fixed-size batches from one seeded generator,
    so the output depends only on ``(game, samples, seed)``.
    """
    if samples < 1:
        raise ValidationError(f"samples must be >= 1, got {samples}")
    n = game.n
    v = game.values
    rng = np.random.default_rng(seed)
    mean = np.zeros(n)
    m2 = np.zeros(n)
    done = 0
    base = np.arange(n, dtype=np.int64)
    while done < samples:
        k = min(MC_BATCH, samples - done)
        perms = rng.permuted(np.tile(base, (k, 1)), axis=1)
        bits = np.left_shift(1, perms)
        after = np.bitwise_or.accumulate(bits, axis=1)
        marg = v[after] - v[after ^ bits]
        per_player = np.empty_like(marg)
        np.put_along_axis(per_player, perms, marg, axis=1)
        # Chan et al. pairwise update of running mean / sum of squared deviations
        b_mean = per_player.mean(axis=0)
        b_m2 = ((per_player - b_mean) ** 2).sum(axis=0)
        delta = b_mean - mean
        tot = done + k
        mean = mean + delta * (k / tot)
        m2 = m2 + b_m2 + delta**2 * (done * k / tot)
        done = tot
    if samples > 1:
        stderr = np.sqrt(m2 / (samples - 1) / samples)
    else:
        stderr = np.zeros(n)
    return ContributionVector(mean, "monte_carlo", samples=samples, seed=seed, stderr=stderr)


# ------------------------------------------------------------------ axioms


@dataclass
class AxiomReport:
    efficiency: bool
    efficiency_error: float
    null_player: dict[int, bool] = field(default_factory=dict)
    symmetry: dict[tuple[int, int], bool] = field(default_factory=dict)
    deservedness: dict[tuple[int, int], bool] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return (
            self.efficiency
            and all(self.null_player.values())
            and all(self.symmetry.values())
            and all(self.deservedness.values())
        )


def _marginals_excluding(game: Game, i: int, j: int) -> tuple[np.ndarray, np.ndarray]:
    """``v(C + i)`` and ``v(C + j)`` for every C avoiding both players."""
    masks = np.arange(1 << game.n)
    free = masks[(masks & ((1 << i) | (1 << j))) == 0]
    return game.values[free | 1 << i], game.values[free | 1 << j]


def verify_axioms(game: Game, phi, tol: float = 1e-9) -> AxiomReport:
    """Test the four fairness properties against a contribution vector.

    Premises (null, symmetric, dominated marginal profiles) are detected by
    brute force over coalitions; each detected premise records whether the
    matching conclusion holds within relative tolerance ``tol``.
    """
    p = as_phi(phi)
    n = game.n
    vN = game.grand_value
    scale = max(1.0, abs(vN), float(np.max(np.abs(p))) if p.size else 0.0)
    eps = tol * scale
    err = abs(float(p.sum()) - vN)
    report = AxiomReport(efficiency=err <= eps, efficiency_error=err)

    masks = np.arange(1 << n)
    v = game.values
    for i in range(n):
        base = masks[(masks & (1 << i)) == 0]
        if np.all(np.abs(v[base | 1 << i] - v[base]) <= eps):
            report.null_player[i] = abs(p[i]) <= eps
    for i in range(n):
        for j in range(i + 1, n):
            with_i, with_j = _marginals_excluding(game, i, j)
            if np.all(np.abs(with_i - with_j) <= eps):
                report.symmetry[(i, j)] = abs(p[i] - p[j]) <= eps
            elif np.all(with_i <= with_j + eps):
                report.deservedness[(i, j)] = p[i] <= p[j] + eps
            elif np.all(with_j <= with_i + eps):
                report.deservedness[(j, i)] = p[j] <= p[i] + eps
    return report
