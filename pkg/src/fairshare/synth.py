"""Seeded synthetic one-feature regression datasets."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Mapping

import numpy as np

from .errors import BadConfig
from .valuation import PlayerDataset

DISTRIBUTIONS = {"uniform": ("a", "b"), "normal": ("mu", "s"), "point": ("x",)}


@dataclass(frozen=True)
class PlayerSpec:
    rows: int
    dist: str
    params: tuple[float, ...]
    noise_var: float

    @classmethod
    def from_dict(cls, doc: Mapping) -> "PlayerSpec":
        try:
            dist = dict(doc["dist"])
            kind = dist.pop("kind")
            names = DISTRIBUTIONS[kind]
            params = tuple(float(dist.pop(k)) for k in names)
            if dist:
                raise BadConfig(f"unknown parameter(s) {sorted(dist)} for {kind} distribution")
            spec = cls(int(doc.get("rows", 1)), kind, params, float(doc["noise_var"]))
        except KeyError as err:
            raise BadConfig(f"player spec missing {err}") from None
        except (TypeError, ValueError) as err:
            raise BadConfig(f"bad player spec {dict(doc)}: {err}") from None
        if spec.rows < 1:
            raise BadConfig(f"rows must be >= 1, got {spec.rows}")
        if not spec.noise_var > 0:
            raise BadConfig(f"noise_var must be > 0, got {spec.noise_var}")
        if kind == "uniform" and not params[0] < params[1]:
            raise BadConfig(f"uniform needs a < b, got {params}")
        if kind == "normal" and not params[1] > 0:
            raise BadConfig(f"normal needs s > 0, got {params[1]}")
        return spec

    def to_dict(self) -> dict:
        dist = {"kind": self.dist, **dict(zip(DISTRIBUTIONS[self.dist], self.params))}
        return {"rows": self.rows, "dist": dist, "noise_var": self.noise_var}


@dataclass(frozen=True)
class SynthConfig:
    players: tuple[PlayerSpec, ...]
    seed: int = 0
    slope: float = 1.0

    @classmethod
    def from_dict(cls, doc: Mapping) -> "SynthConfig":
        unknown = set(doc) - {"players", "seed", "slope", "note"}
        if unknown:
            raise BadConfig(f"unknown synth field(s): {sorted(unknown)}")
        if not doc.get("players"):
            raise BadConfig("synth config needs a nonempty 'players' list")
        return cls(
            tuple(PlayerSpec.from_dict(p) for p in doc["players"]),
            int(doc.get("seed", 0)),
            float(doc.get("slope", 1.0)),
        )

    def to_dict(self) -> dict:
        return {"players": [p.to_dict() for p in self.players], "seed": self.seed, "slope": self.slope}


def default_synth_config() -> SynthConfig:
    """Seven players: one point at the origin, then increasingly informative
    data, with players 3 and 4 (1-based) drawn from the same distribution."""
    text = resources.files("fairshare").joinpath("data/default_synth.json").read_text()
    return SynthConfig.from_dict(json.loads(text))


def generate_synthetic(config: SynthConfig) -> list[PlayerDataset]:
    """One dataset per player, ``y = slope * x + N(0, noise_var)``.

    Each player draws from its own child of the config seed, so identical
    specs at different positions give independent but equally distributed
    data.  A ``point`` player's rows sit exactly on the line (no noise draw).
    """
    children = np.random.SeedSequence(config.seed).spawn(len(config.players))
    out = []
    for spec, ss in zip(config.players, children):
        rng = np.random.default_rng(ss)
        if spec.dist == "uniform":
            x = rng.uniform(spec.params[0], spec.params[1], spec.rows)
        elif spec.dist == "normal":
            x = rng.normal(spec.params[0], spec.params[1], spec.rows)
        else:
            x = np.full(spec.rows, spec.params[0])
        y = config.slope * x
        if spec.dist != "point":
            y = y + rng.normal(0.0, np.sqrt(spec.noise_var), spec.rows)
        out.append(PlayerDataset(x.reshape(-1, 1), y, np.full(spec.rows, spec.noise_var)))
    return out
