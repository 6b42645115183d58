"""Per-player dataset files and confidence-band partitioning.

CSV layout: header ``player,x1,...,xd,y,noise_var``; one row per datapoint;
player ids are 0-based and must cover ``0..n-1``.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import BadConfig, IoError, MissingColumn, ParseError, RaggedDimensions
from .serialize import format_float
from .valuation import PlayerDataset, concat_datasets, predict_proba

DEFAULT_BANDS = ((0.25, 0.75), (0.1, 0.9), (0.05, 0.95))


def _check_header(header: list[str]) -> int:
    if not header or header[0].strip() != "player":
        raise MissingColumn("first column must be 'player'")
    names = [h.strip() for h in header]
    if len(names) < 4 or names[-2:] != ["y", "noise_var"]:
        raise MissingColumn("header must end with 'y,noise_var' after at least one feature column")
    feats = names[1:-2]
    expected = [f"x{k}" for k in range(1, len(feats) + 1)]
    if feats != expected:
        missing = sorted(set(expected) - set(feats)) or feats
        raise MissingColumn(f"feature columns must be {','.join(expected)}; got {','.join(feats)} (check {missing})")
    return len(feats)


def parse_datasets_csv(text: str) -> list[PlayerDataset]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise MissingColumn("empty file, no header") from None
    d = _check_header(header)
    rows: dict[int, list[list[float]]] = {}
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != d + 3:
            raise RaggedDimensions(f"line {line}: expected {d + 3} fields, got {len(row)}")
        try:
            pid = int(row[0])
        except ValueError:
            raise ParseError(f"player id {row[0]!r} is not an integer", line) from None
        if pid < 0:
            raise ParseError(f"player id {pid} is negative", line)
        try:
            nums = [float(c) for c in row[1:]]
        except ValueError as err:
            raise ParseError(str(err), line) from None
        rows.setdefault(pid, []).append(nums)
    if not rows:
        raise ParseError("no data rows")
    n = max(rows) + 1
    gaps = sorted(set(range(n)) - set(rows))
    if gaps:
        raise ParseError(f"player ids must be contiguous from 0; missing {gaps}")
    out = []
    for pid in range(n):
        a = np.array(rows[pid])
        out.append(PlayerDataset(a[:, :d], a[:, d], a[:, d + 1]))
    return out


def load_datasets_csv(path: str | Path) -> list[PlayerDataset]:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise IoError(f"cannot read dataset file {path}: {err}") from err
    return parse_datasets_csv(text)


def datasets_to_csv(datasets: Sequence[PlayerDataset]) -> str:
    d = datasets[0].dim if datasets else 1
    lines = [",".join(["player", *(f"x{k}" for k in range(1, d + 1)), "y", "noise_var"])]
    for pid, ds in enumerate(datasets):
        for x, y, s2 in zip(ds.X, ds.y, ds.noise_var):
            lines.append(",".join([str(pid), *map(format_float, x), format_float(y), format_float(s2)]))
    return "\n".join(lines) + "\n"


def save_datasets_csv(datasets: Sequence[PlayerDataset], path: str | Path) -> None:
    try:
        Path(path).write_text(datasets_to_csv(datasets))
    except OSError as err:
        raise IoError(f"cannot write {path}: {err}") from err


def partition_by_confidence(
    pool: PlayerDataset | Sequence[PlayerDataset],
    theta,
    *,
    bands: Sequence[tuple[float, float]] = DEFAULT_BANDS,
    size: int | None = None,
    bias: bool = False,
    seed: int = 0,
) -> list[PlayerDataset]:
    """Split a pool into one dataset per band of predicted probability.

    A row is eligible for band ``(lo, hi)`` when ``lo < p < hi`` under the
    reference model.  Bands are filled in order, each drawing ``size`` rows
    without replacement from eligible rows not already taken.  ``size``
    defaults to the largest value every band can fill.
    """
    if not isinstance(pool, PlayerDataset):
        pool = concat_datasets(list(pool))
    p = predict_proba(pool.X, theta, bias)
    rng = np.random.default_rng(seed)
    eligible = [np.flatnonzero((p > lo) & (p < hi)) for lo, hi in bands]
    if size is None:
        # greedy bound: each band loses what earlier bands may have taken
        size = min(e.size for e in eligible) // len(bands) if len(bands) > 1 else eligible[0].size
        size = max(size, 1)
    taken = np.zeros(pool.rows, dtype=bool)
    out = []
    for (lo, hi), idx in zip(bands, eligible):
        free = idx[~taken[idx]]
        if free.size < size:
            raise BadConfig(f"band ({lo}, {hi}) has {free.size} free rows, needs {size}")
        pick = np.sort(rng.choice(free, size, replace=False))
        taken[pick] = True
        out.append(PlayerDataset(pool.X[pick], pool.y[pick], pool.noise_var[pick]))
    return out
