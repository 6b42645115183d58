"""Coalitions and complete characteristic-function games.

A game over ``n`` players stores one value per coalition in a dense float64
array indexed by the coalition's bitmask (bit ``i`` set means player ``i`` is
a member).  ``values[0]`` is the empty coalition and is always zero.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    BadCoalitionKey,
    CapExceeded,
    DuplicateCoalition,
    IoError,
    MissingCoalition,
    NegativeValue,
    NonfiniteValue,
    NonzeroEmptyValue,
    ValidationError,
)

DEFAULT_CAP = 20
REL_TOL = 1e-9


def check_cap(n: int, cap: int = DEFAULT_CAP) -> None:
    if n < 1:
        raise ValidationError(f"need at least one player, got n={n}")
    if n > cap:
        raise CapExceeded(f"{n} players exceeds the cap of {cap} (2^{n} coalitions)")


@dataclass(frozen=True, order=True)
class Coalition:
    """A set of players encoded as an ``n``-bit mask."""

    mask: int
    n: int

    def __post_init__(self):
        if self.mask < 0 or self.mask >> self.n:
            raise BadCoalitionKey(f"mask {self.mask:#x} has members outside 0..{self.n - 1}")

    @classmethod
    def from_members(cls, members: Iterable[int], n: int) -> "Coalition":
        mask = 0
        for i in members:
            if not 0 <= i < n:
                raise BadCoalitionKey(f"player index {i} outside 0..{n - 1}")
            mask |= 1 << i
        return cls(mask, n)

    @classmethod
    def parse(cls, key: str, n: int) -> "Coalition":
        """Parse a comma-joined index key such as ``"0,2"`` (``""`` is the empty set)."""
        key = key.strip()
        if not key:
            return cls(0, n)
        try:
            idx = [int(tok) for tok in key.split(",")]
        except ValueError:
            raise BadCoalitionKey(f"malformed coalition key {key!r}") from None
        if len(set(idx)) != len(idx):
            raise BadCoalitionKey(f"repeated player in coalition key {key!r}")
        if idx != sorted(idx):
            raise BadCoalitionKey(f"coalition key {key!r} must list players in ascending order")
        return cls.from_members(idx, n)

    @property
    def members(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.n) if self.mask >> i & 1)

    @property
    def key(self) -> str:
        return ",".join(str(i) for i in self.members)

    def __contains__(self, i: int) -> bool:
        return bool(self.mask >> i & 1)

    def __len__(self) -> int:
        return bin(self.mask).count("1")

    def __or__(self, other: "Coalition | int") -> "Coalition":
        if isinstance(other, Coalition):
            return Coalition(self.mask | other.mask, self.n)
        return Coalition(self.mask | (1 << other), self.n)

    def __str__(self) -> str:
        return "{" + self.key + "}"


class MonotoneStatus(enum.Enum):
    UNCHECKED = "unchecked"
    VERIFIED = "verified"
    VIOLATED = "violated"


class Game:
    """Immutable dense table ``coalition mask -> value``.

    The value array is made read-only on construction.  ``monotone`` is a
    cached verdict filled in by :func:`check_monotonicity`.
    """

    def __init__(
        self,
        values: Sequence[float] | np.ndarray,
        labels: Sequence[str] | None = None,
        *,
        cap: int = DEFAULT_CAP,
        allow_negative: bool = False,
    ):
        arr = np.array(values, dtype=np.float64)
        if arr.ndim != 1 or arr.size < 2 or arr.size & (arr.size - 1):
            raise ValidationError(f"value table length {arr.size} is not 2^n with n >= 1")
        n = arr.size.bit_length() - 1
        check_cap(n, cap)
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise NonfiniteValue(f"coalition {Coalition(bad, n)} has non-finite value {arr[bad]}")
        if arr[0] != 0.0:
            raise NonzeroEmptyValue(f"v(empty set) must be 0, got {arr[0]}")
        if not allow_negative and np.any(arr < 0):
            bad = int(np.flatnonzero(arr < 0)[0])
            raise NegativeValue(f"coalition {Coalition(bad, n)} has negative value {arr[bad]}")
        arr.flags.writeable = False
        self.n = n
        self.values = arr
        if labels is None:
            labels = [str(i) for i in range(n)]
        labels = [str(lab) for lab in labels]
        if len(labels) != n:
            raise ValidationError(f"{len(labels)} labels for {n} players")
        self.labels = tuple(labels)
        self.monotone = MonotoneStatus.UNCHECKED

    @property
    def grand(self) -> int:
        return (1 << self.n) - 1

    @property
    def grand_value(self) -> float:
        return float(self.values[self.grand])

    def value(self, coalition: Coalition | Iterable[int] | int) -> float:
        if isinstance(coalition, Coalition):
            mask = coalition.mask
        elif isinstance(coalition, (int, np.integer)):
            mask = int(coalition)
        else:
            mask = Coalition.from_members(coalition, self.n).mask
        return float(self.values[mask])

    def to_table(self) -> dict[str, float]:
        """Every nonempty coalition keyed in canonical ascending-index form."""
        return {Coalition(m, self.n).key: float(self.values[m]) for m in range(1, 1 << self.n)}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Game):
            return NotImplemented
        return self.labels == other.labels and np.array_equal(self.values, other.values)

    def __repr__(self) -> str:
        return f"Game(n={self.n}, v(N)={self.grand_value:g}, monotone={self.monotone.value})"


def game_from_table(
    n: int,
    entries: Mapping[str | Coalition | tuple, float],
    labels: Sequence[str] | None = None,
    *,
    cap: int = DEFAULT_CAP,
) -> Game:
    """Build a game from a coalition-keyed mapping.

    Keys may be comma-joined index strings, tuples of indices, or
    :class:`Coalition` objects.  All ``2^n - 1`` nonempty coalitions must be
    present exactly once; the empty coalition is optional and must be 0.
    """
    check_cap(n, cap)
    size = 1 << n
    values = np.zeros(size)
    seen = np.zeros(size, dtype=bool)
    for key, val in entries.items():
        if isinstance(key, Coalition):
            c = key
        elif isinstance(key, str):
            c = Coalition.parse(key, n)
        else:
            c = Coalition.from_members(key, n)
        if seen[c.mask]:
            raise DuplicateCoalition(f"coalition {c} given more than once")
        seen[c.mask] = True
        val = float(val)
        if not math.isfinite(val):
            raise NonfiniteValue(f"coalition {c} has non-finite value {val}")
        if c.mask == 0 and val != 0.0:
            raise NonzeroEmptyValue(f"v(empty set) must be 0, got {val}")
        values[c.mask] = val
    missing = np.flatnonzero(~seen[1:]) + 1
    if missing.size:
        shown = ", ".join(str(Coalition(int(m), n)) for m in missing[:5])
        raise MissingCoalition(f"{missing.size} coalition(s) missing, e.g. {shown}")
    return Game(values, labels, cap=cap)


def _violation_masks(values: np.ndarray, n: int) -> list[tuple[int, int]]:
    masks = np.arange(values.size)
    out = []
    for i in range(n):
        bit = 1 << i
        base = masks[(masks & bit) == 0]
        lo, hi = values[base], values[base | bit]
        bad = lo - hi > REL_TOL * np.maximum(1.0, np.abs(lo))
        out.extend((int(m), i) for m in base[bad])
    out.sort()
    return out


def check_monotonicity(game: Game) -> list[tuple[Coalition, int]]:
    """Return every ``(C, i)`` with ``i`` not in ``C`` and ``v(C) > v(C + i)``.

    Only immediate supersets are checked, which suffices by transitivity.
    A relative slack of 1e-9 absorbs rounding in computed valuations.  The
    verdict is cached on ``game.monotone``.
    """
    bad = _violation_masks(game.values, game.n)
    game.monotone = MonotoneStatus.VIOLATED if bad else MonotoneStatus.VERIFIED
    return [(Coalition(m, game.n), i) for m, i in bad]


def is_monotone(game: Game) -> bool:
    if game.monotone is MonotoneStatus.UNCHECKED:
        check_monotonicity(game)
    return game.monotone is MonotoneStatus.VERIFIED


def player_order(key: Sequence[float] | np.ndarray) -> np.ndarray:
    """Players sorted ascending by ``key``; ties go to the lower index."""
    return np.argsort(np.asarray(key, dtype=np.float64), kind="stable")


def prefix_masks(order: Sequence[int]) -> np.ndarray:
    bits = np.left_shift(1, np.asarray(order, dtype=np.int64))
    return np.bitwise_or.accumulate(bits)


def prefix_values(game: Game, order: Sequence[int]) -> np.ndarray:
    """``v`` of the union of the first ``k + 1`` players of ``order``, for each k."""
    order = np.asarray(order, dtype=np.int64)
    if sorted(order.tolist()) != list(range(game.n)):
        raise ValidationError(f"order {order.tolist()} is not a permutation of 0..{game.n - 1}")
    return game.values[prefix_masks(order)].copy()


def game_from_valuation(datasets, spec, labels: Sequence[str] | None = None, *, cap: int = DEFAULT_CAP) -> Game:
    """Value every coalition's pooled data under ``spec``.

    ``datasets`` is a sequence of :class:`~fairshare.valuation.PlayerDataset`;
    coalition data is the members' rows concatenated in ascending player order.
    """
    from .valuation import concat_datasets, evaluate, prepare_datasets

    n = len(datasets)
    check_cap(n, cap)
    prepared = prepare_datasets(datasets, spec)
    values = np.zeros(1 << n)
    for mask in range(1, 1 << n):
        members = [prepared[i] for i in range(n) if mask >> i & 1]
        values[mask] = evaluate(spec, concat_datasets(members))
    return Game(values, labels, cap=cap)


# ---------------------------------------------------------------- JSON files

_GAME_FIELDS = {"n", "labels", "values"}


def game_to_dict(game: Game) -> dict:
    return {"n": game.n, "labels": list(game.labels), "values": game.to_table()}


def game_from_dict(doc: Mapping, *, cap: int = DEFAULT_CAP) -> Game:
    if not isinstance(doc, Mapping):
        raise ValidationError("game document must be a JSON object")
    unknown = set(doc) - _GAME_FIELDS
    if unknown:
        raise ValidationError(f"unknown field(s) in game document: {sorted(unknown)}")
    if "n" not in doc or "values" not in doc:
        raise ValidationError("game document needs 'n' and 'values'")
    n = doc["n"]
    if not isinstance(n, int) or isinstance(n, bool):
        raise ValidationError(f"'n' must be an integer, got {n!r}")
    values = doc["values"]
    if not isinstance(values, Mapping):
        raise ValidationError("'values' must be an object keyed by coalition")
    return game_from_table(n, values, doc.get("labels"), cap=cap)


def _reject_duplicate_keys(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise DuplicateCoalition(f"key {k!r} appears twice")
        out[k] = v
    return out


def load_game(path: str | Path, *, cap: int = DEFAULT_CAP) -> Game:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise IoError(f"cannot read game file {path}: {err}") from err
    try:
        doc = json.loads(text, object_pairs_hook=_reject_duplicate_keys)
    except json.JSONDecodeError as err:
        raise ValidationError(f"{path}: invalid JSON: {err}") from err
    return game_from_dict(doc, cap=cap)
