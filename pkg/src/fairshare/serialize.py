"""Deterministic JSON output.

Floats are written with 17 significant digits so every double round-trips
exactly, and re-emitting a reloaded document reproduces it byte for byte.
Infinite interval ends are written as ``null``.
"""

from __future__ import annotations

import hashlib
import json
import math
from typing import Any

import numpy as np


def format_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot serialise non-finite float {x}")
    s = format(x, ".17g")
    if not any(ch in s for ch in ".en"):
        s += ".0"
    return s


def _plain(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _emit(obj: Any, indent: int, level: int, out: list[str]) -> None:
    obj = _plain(obj)
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or obj is True or obj is False:
        out.append(json.dumps(obj))
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append("null" if math.isinf(obj) else format_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for k, (key, val) in enumerate(obj.items()):
            out.append(f"{pad}{json.dumps(str(key))}: ")
            _emit(val, indent, level + 1, out)
            out.append(",\n" if k + 1 < len(obj) else "\n")
        out.append(end + "}")
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.append("[]")
            return
        if all(isinstance(_plain(v), (int, float)) or _plain(v) is None for v in obj):
            parts: list[str] = []
            for v in obj:
                _emit(v, indent, level + 1, parts)
                parts.append(", ")
            out.append("[" + "".join(parts[:-1]) + "]")
            return
        out.append("[\n")
        for k, val in enumerate(obj):
            out.append(pad)
            _emit(val, indent, level + 1, out)
            out.append(",\n" if k + 1 < len(obj) else "\n")
        out.append(end + "]")
    else:
        raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj: Any, indent: int = 2) -> str:
    out: list[str] = []
    _emit(obj, indent, 0, out)
    return "".join(out) + "\n"


def _np_default(obj: Any) -> Any:
    plain = _plain(obj)
    if plain is obj:
        raise TypeError(f"cannot hash {type(obj).__name__}")
    return plain


def content_hash(obj: Any) -> str:
    """sha256 of the canonical (sorted-key, compact) JSON form.

    ``repr`` of a float is already the shortest exact round-trip string, so
    the standard encoder is canonical enough for hashing.
    """
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_np_default, allow_nan=False)
    return hashlib.sha256(text.encode()).hexdigest()
