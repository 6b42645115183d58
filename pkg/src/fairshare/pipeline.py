"""End-to-end run: inputs -> game -> contributions -> payoffs (or a fallback).

A config is a JSON object naming exactly one input source:

``game``      path to a game JSON file, or an inline game object
``datasets``  path to a dataset CSV (needs ``valuation``)
``synth``     ``"default"``, a path, or an inline synthetic config (needs ``valuation``)

plus optional ``labels``, ``cap``, ``seed``, ``shapley``, ``fallback``,
``deviation``, ``solver`` and ``sensitivity``.  Relative paths resolve
against the config file's directory.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import __version__
from .allocation import optimal_outcome
from .datasets import load_datasets_csv
from .errors import BadConfig, FairShareError, IoError, PipelineError
from .game import DEFAULT_CAP, Game, game_from_dict, game_from_valuation, is_monotone, load_game
from .sensitivity import admit_new_agent, perturb_feasible
from .serialize import content_hash
from .shapley import ContributionVector, shapley_exact, shapley_monte_carlo
from .suboptimal import DeviationSpec, SolverConfig, epsilon_for, min_deviation_stable, stability_gaps
from .synth import SynthConfig, default_synth_config, generate_synthetic
from .valuation import ValuationSpec

FALLBACKS = ("stable_min_deviation", "proportional_epsilon")
STATUSES = ("optimal", "stable_nonproportional", "proportional_epsilon_stable")
METHODS = ("auto", "exact", "monte_carlo")
_TOP_KEYS = {"game", "datasets", "synth", "valuation", "labels", "cap", "seed", "shapley", "fallback",
             "deviation", "solver", "sensitivity"}


@dataclass(frozen=True)
class ShapleyOptions:
    method: str = "auto"
    samples: int = 20000
    seed: int | None = None
    exact_max_n: int = DEFAULT_CAP

    def __post_init__(self):
        if self.method not in METHODS:
            raise BadConfig(f"shapley method must be one of {METHODS}, got {self.method!r}")
        if self.samples < 1:
            raise BadConfig(f"shapley samples must be >= 1, got {self.samples}")


def _options(cls, doc: Mapping | None, what: str):
    doc = dict(doc or {})
    names = {f.name for f in fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise BadConfig(f"unknown {what} option(s): {sorted(unknown)}")
    try:
        return cls(**doc)
    except (TypeError, ValueError) as err:
        raise BadConfig(f"bad {what} options: {err}") from None


@dataclass(frozen=True)
class PipelineConfig:
    game: str | dict | None = None
    datasets: str | None = None
    synth: str | dict | None = None
    valuation: dict | None = None
    labels: list[str] | None = None
    cap: int = DEFAULT_CAP
    seed: int = 0
    shapley: ShapleyOptions = ShapleyOptions()
    fallback: str = "stable_min_deviation"
    deviation: DeviationSpec = DeviationSpec()
    solver: SolverConfig = SolverConfig()
    sensitivity: dict = field(default_factory=dict)
    base_dir: Path | None = field(default=None, compare=False)

    @classmethod
    def from_dict(cls, doc: Mapping, base_dir: str | Path | None = None) -> "PipelineConfig":
        if not isinstance(doc, Mapping):
            raise BadConfig("config must be a JSON object")
        unknown = set(doc) - _TOP_KEYS
        if unknown:
            raise BadConfig(f"unknown config field(s): {sorted(unknown)}")
        sources = [k for k in ("game", "datasets", "synth") if doc.get(k) is not None]
        if len(sources) != 1:
            raise BadConfig(f"config must name exactly one of game/datasets/synth, got {sources or 'none'}")
        if sources[0] != "game" and not doc.get("valuation"):
            raise BadConfig(f"{sources[0]} input needs a 'valuation' section")
        fallback = doc.get("fallback", "stable_min_deviation")
        if fallback not in FALLBACKS:
            raise BadConfig(f"fallback must be one of {FALLBACKS}, got {fallback!r}")
        seed = doc.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise BadConfig(f"seed must be a nonnegative integer, got {seed!r}")
        solver_doc = {"seed": seed, **dict(doc.get("solver") or {})}
        sens = dict(doc.get("sensitivity") or {})
        if set(sens) - {"new_agent", "perturb"}:
            raise BadConfig(f"unknown sensitivity field(s): {sorted(set(sens) - {'new_agent', 'perturb'})}")
        return cls(
            game=doc.get("game"),
            datasets=doc.get("datasets"),
            synth=doc.get("synth"),
            valuation=doc.get("valuation"),
            labels=doc.get("labels"),
            cap=int(doc.get("cap", DEFAULT_CAP)),
            seed=seed,
            shapley=_options(ShapleyOptions, doc.get("shapley"), "shapley"),
            fallback=fallback,
            deviation=_options(DeviationSpec, doc.get("deviation"), "deviation"),
            solver=_options(SolverConfig, solver_doc, "solver"),
            sensitivity=sens,
            base_dir=Path(base_dir) if base_dir is not None else None,
        )

    def to_dict(self) -> dict:
        """Fully resolved config (defaults filled in), suitable for rerunning."""
        out: dict[str, Any] = {}
        for key in ("game", "datasets", "synth", "valuation", "labels"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        out["cap"] = self.cap
        out["seed"] = self.seed
        out["shapley"] = {f.name: getattr(self.shapley, f.name) for f in fields(ShapleyOptions)}
        out["fallback"] = self.fallback
        out["deviation"] = {"kind": self.deviation.kind, "p": float(self.deviation.p)}
        out["solver"] = {f.name: getattr(self.solver, f.name) for f in fields(SolverConfig)}
        if self.sensitivity:
            out["sensitivity"] = self.sensitivity
        return out

    def with_overrides(self, **kw) -> "PipelineConfig":
        """Replace top-level fields; ``seed`` also reseeds the solver."""
        kw = {k: v for k, v in kw.items() if v is not None}
        if "seed" in kw:
            kw.setdefault("solver", replace(self.solver, seed=kw["seed"]))
        return replace(self, **kw)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        if self.base_dir is not None and not p.is_absolute():
            p = self.base_dir / p
        return p


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as err:
        raise IoError(f"cannot read config {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise BadConfig(f"{path}: invalid JSON: {err}") from err
    return PipelineConfig.from_dict(doc, base_dir=path.parent)


def _as_config(config) -> PipelineConfig:
    if isinstance(config, PipelineConfig):
        return config
    return PipelineConfig.from_dict(config)


def _file_digest(path: Path) -> dict:
    try:
        data = path.read_bytes()
    except OSError as err:
        raise IoError(f"cannot read {path}: {err}") from err
    return {"name": path.name, "sha256": hashlib.sha256(data).hexdigest()}


@dataclass(frozen=True)
class LoadedGame:
    game: Game
    source: str
    files: tuple[dict, ...] = ()


def synth_config_for(cfg: PipelineConfig) -> tuple[SynthConfig, tuple[dict, ...]]:
    if cfg.synth == "default":
        return default_synth_config(), ()
    if isinstance(cfg.synth, str):
        path = cfg.resolve(cfg.synth)
        digest = _file_digest(path)
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as err:
            raise BadConfig(f"{path}: invalid JSON: {err}") from err
        return SynthConfig.from_dict(doc), (digest,)
    return SynthConfig.from_dict(cfg.synth), ()


def build_game(config) -> LoadedGame:
    """Load or value the game named by the config."""
    cfg = _as_config(config)
    try:
        if cfg.game is not None:
            if isinstance(cfg.game, str):
                path = cfg.resolve(cfg.game)
                game = load_game(path, cap=cfg.cap)
                files: tuple[dict, ...] = (_file_digest(path),)
            else:
                game, files = game_from_dict(cfg.game, cap=cfg.cap), ()
            if cfg.labels is not None:
                game = Game(game.values, cfg.labels, cap=cfg.cap)
            return LoadedGame(game, "game", files)
        if cfg.datasets is not None:
            path = cfg.resolve(cfg.datasets)
            data, files, source = load_datasets_csv(path), (_file_digest(path),), "datasets"
        else:
            synth, files = synth_config_for(cfg)
            data, source = generate_synthetic(synth), "synth"
    except FairShareError as err:
        raise PipelineError("load", err) from err
    try:
        spec = ValuationSpec.from_dict(cfg.valuation, cfg.base_dir)
        game = game_from_valuation(data, spec, cfg.labels, cap=cfg.cap)
    except FairShareError as err:
        raise PipelineError("valuation", err) from err
    return LoadedGame(game, source, files)


def contributions(game: Game, config) -> ContributionVector:
    cfg = _as_config(config)
    opt = cfg.shapley
    method = opt.method
    if method == "auto":
        method = "exact" if game.n <= opt.exact_max_n else "monte_carlo"
    try:
        if method == "exact":
            return shapley_exact(game, cap=cfg.cap)
        seed = cfg.seed if opt.seed is None else opt.seed
        return shapley_monte_carlo(game, opt.samples, seed)
    except FairShareError as err:
        raise PipelineError("shapley", err) from err


def _per_player(order: np.ndarray, by_position: np.ndarray) -> np.ndarray:
    out = np.empty_like(by_position)
    out[order] = by_position
    return out


@dataclass(frozen=True)
class AllocationReport:
    """Everything one run produced, plus what is needed to rerun it."""

    status: str
    labels: tuple[str, ...]
    grand_value: float
    source: str
    phi: np.ndarray
    payoffs: np.ndarray
    bounds: np.ndarray  # per player: prefix bound at the player's rank
    shapley: dict
    diagnostics: dict
    provenance: dict
    config: dict
    sensitivity: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.status not in STATUSES:
            raise BadConfig(f"unknown report status {self.status!r}")

    @property
    def n(self) -> int:
        return len(self.labels)

    def to_dict(self) -> dict:
        out = {
            "status": self.status,
            "game": {"n": self.n, "labels": list(self.labels), "grand_value": self.grand_value, "source": self.source},
            "phi": self.phi.tolist(),
            "payoffs": self.payoffs.tolist(),
            "bounds": self.bounds.tolist(),
            "shapley": self.shapley,
            "diagnostics": self.diagnostics,
        }
        if self.sensitivity:
            out["sensitivity"] = self.sensitivity
        out["provenance"] = self.provenance
        out["config"] = self.config
        return out

    @classmethod
    def from_dict(cls, doc: Mapping) -> "AllocationReport":
        try:
            g = doc["game"]
            return cls(
                status=doc["status"],
                labels=tuple(g["labels"]),
                grand_value=float(g["grand_value"]),
                source=g["source"],
                phi=np.array(doc["phi"], dtype=np.float64),
                payoffs=np.array(doc["payoffs"], dtype=np.float64),
                bounds=np.array(doc["bounds"], dtype=np.float64),
                shapley=doc["shapley"],
                diagnostics=doc["diagnostics"],
                provenance=doc["provenance"],
                config=doc["config"],
                sensitivity=doc.get("sensitivity", {}),
            )
        except (KeyError, TypeError) as err:
            raise BadConfig(f"malformed report: {err}") from None


def _shapley_summary(cv: ContributionVector) -> dict:
    out: dict[str, Any] = {"method": cv.provenance}
    if not cv.exact:
        out["samples"] = cv.samples
        out["seed"] = cv.seed
        out["stderr"] = cv.stderr.tolist()
    return out


def _sensitivity(game: Game, phi: np.ndarray, queries: dict) -> dict:
    out: dict[str, Any] = {}
    if "new_agent" in queries:
        out["new_agent"] = [verdict_to_dict(admit_new_agent(game, phi, float(v))) | {"phi_new": float(v)}
                            for v in queries["new_agent"]]
    if "perturb" in queries:
        items = []
        for q in queries["perturb"]:
            v = perturb_feasible(game, phi, int(q["player"]), float(q["delta"]))
            items.append(verdict_to_dict(v) | {"player": int(q["player"]), "delta": float(q["delta"])})
        out["perturb"] = items
    return out


def verdict_to_dict(v) -> dict:
    out: dict[str, Any] = {"feasible": v.feasible, "failing": v.binding}
    if v.insertion_position is not None:
        out["insertion_position"] = v.insertion_position
    if v.window is not None:
        out["window"] = list(v.window)
    if v.raw_interval is not None:
        out["raw_interval"] = [list(iv) for iv in v.raw_interval]
        out["interval"] = [list(iv) for iv in v.interval]
    if v.extra.get("quadratic") is not None:
        out["quadratic"] = list(v.extra["quadratic"])
    cons = []
    for c in v.constraints:
        item: dict[str, Any] = {"name": c.name, "holds": c.holds}
        if c.vacuous:
            item["vacuous"] = True
        if c.lhs is not None:
            item["lhs"], item["rhs"] = c.lhs, c.rhs
        if c.bound is not None:
            item["op"], item["bound"] = c.bound
        cons.append(item)
    out["constraints"] = cons
    return out


def allocate(game: Game, cv: ContributionVector, cfg: PipelineConfig) -> tuple[str, np.ndarray, np.ndarray, dict]:
    """Status, payoffs, per-player bounds and diagnostics for one game."""
    phi = cv.phi
    try:
        out = optimal_outcome(game, phi)
    except FairShareError as err:
        raise PipelineError("allocation", err) from err
    prop_bounds = _per_player(out.order, out.bounds)
    gaps = np.maximum(prop_bounds - out.proportional, 0.0)
    diag: dict[str, Any] = {
        "alpha": out.alpha,
        "proportional": out.proportional.tolist(),
        "proportional_violations": [int(out.order[k]) for k in out.violations],
        "d": gaps.tolist(),
    }
    if out.exists:
        return "optimal", out.proportional, prop_bounds, diag
    try:
        if cfg.fallback == "proportional_epsilon":
            cert = epsilon_for(game, out.proportional)
            sg = stability_gaps(game, out.proportional)
            diag["d"] = sg.by_player().tolist()
            diag["epsilon"] = cert.epsilon
            diag["binding"] = [cert.binding_player]
            bounds = _per_player(sg.order, sg.bounds)
            return "proportional_epsilon_stable", out.proportional, bounds, diag
        sol = min_deviation_stable(game, phi, cfg.deviation, cfg.solver)
    except FairShareError as err:
        raise PipelineError("fallback", err) from err
    diag["deviation"] = {"kind": cfg.deviation.kind, "p": float(cfg.deviation.p)}
    diag["objective"] = sol.objective
    diag["baseline_objective"] = sol.baseline_objective
    diag["baseline_alpha"] = sol.baseline_alpha
    diag["binding"] = [int(sol.order[k]) for k in sol.binding]
    return "stable_nonproportional", sol.x, _per_player(sol.order, sol.bounds), diag


def run_pipeline(config, base_dir: str | Path | None = None) -> AllocationReport:
    """Run the full analysis described by ``config`` (dict or PipelineConfig)."""
    cfg = config if isinstance(config, PipelineConfig) else PipelineConfig.from_dict(config, base_dir)
    loaded = build_game(cfg)
    game = loaded.game
    if not is_monotone(game):
        raise PipelineError("allocation", BadConfig("the game is not monotone"))
    cv = contributions(game, cfg)
    status, x, bounds, diag = allocate(game, cv, cfg)
    sens = {}
    if cfg.sensitivity:
        try:
            sens = _sensitivity(game, cv.phi, cfg.sensitivity)
        except FairShareError as err:
            raise PipelineError("sensitivity", err) from err
    resolved = cfg.to_dict()
    provenance = {
        "tool": "fairshare",
        "version": __version__,
        "seed": cfg.seed,
        "config_hash": content_hash(resolved),
        "input_hash": content_hash({"labels": list(game.labels), "values": game.values.tolist()}),
        "input_files": list(loaded.files),
    }
    return AllocationReport(
        status=status,
        labels=game.labels,
        grand_value=game.grand_value,
        source=loaded.source,
        phi=cv.phi,
        payoffs=np.asarray(x, dtype=np.float64),
        bounds=bounds,
        shapley=_shapley_summary(cv),
        diagnostics=diag,
        provenance=provenance,
        config=resolved,
        sensitivity=sens,
    )
