"""Command-line entry point.

Every verb reads ``--config FILE``; selected fields can be overridden by
flags.  Results go to stdout as JSON, or into ``--out DIR``.  Exit status is
0 when the analysis completed (a non-optimal game is a result, not an
error), 2 for invalid input and 3 for file-system failures.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from . import __version__
from .allocation import optimal_outcome
from .datasets import datasets_to_csv
from .errors import FairShareError, IoError, PipelineError, ValidationError
from .game import game_to_dict
from .pipeline import (
    PipelineConfig,
    build_game,
    contributions,
    load_config,
    run_pipeline,
    synth_config_for,
    verdict_to_dict,
)
from .report import FORMATS, emit_report, load_report
from .sensitivity import admit_new_agent, perturb_feasible, perturb_interval
from .serialize import dumps
from .suboptimal import epsilon_for, min_deviation_stable, stability_gaps
from .synth import SynthConfig, default_synth_config, generate_synthetic

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 2, 3


def _formats(text: str) -> list[str]:
    items = [t.strip() for t in text.split(",") if t.strip()]
    bad = [t for t in items if t not in FORMATS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown format(s) {bad}; choose from {','.join(FORMATS)}")
    return items


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="pipeline config (JSON)")
    common.add_argument("--out", type=Path, help="output directory (default: JSON on stdout)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--cap", type=int, help="override the player cap")
    common.add_argument("--fallback", choices=("stable_min_deviation", "proportional_epsilon"))
    common.add_argument("--method", choices=("auto", "exact", "monte_carlo"), help="Shapley method")
    common.add_argument("--samples", type=int, help="Monte Carlo permutations")

    parser = argparse.ArgumentParser(prog="fairshare", description="Shapley-based reward allocation for data-sharing coalitions.")
    parser.add_argument("--version", action="version", version=f"fairshare {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)
    sub.add_parser("shapley", parents=[common], help="contribution of every player")
    sub.add_parser("allocate", parents=[common], help="optimal payoff or configured fallback")
    sub.add_parser("suboptimal", parents=[common], help="both fallbacks side by side")
    sv = sub.add_parser("sensitivity", help="does the optimal outcome survive a change?")
    ssub = sv.add_subparsers(dest="query", required=True)
    na = ssub.add_parser("new-agent", parents=[common], help="add a player of given contribution")
    na.add_argument("--phi-new", type=float, required=True)
    pt = ssub.add_parser("perturb", parents=[common], help="shift one player's coalition values")
    pt.add_argument("--player", type=int, required=True)
    pt.add_argument("--delta", type=float, help="test one shift (default: report the admissible set)")
    sub.add_parser("valuate", parents=[common], help="write the coalition value table")
    sy = sub.add_parser("synth", parents=[common], help="write synthetic datasets as CSV")
    sy.add_argument("--default", action="store_true", help="use the shipped default config")
    rp = sub.add_parser("report", parents=[common], help="render report files")
    rp.add_argument("--report", type=Path, help="re-render an existing report.json instead of running")
    rp.add_argument("--formats", type=_formats, default=list(FORMATS), help="comma list from json,csv,svg")
    return parser


def _config(args) -> PipelineConfig:
    if args.config is None:
        raise ValidationError("--config is required for this command")
    cfg = load_config(args.config)
    shapley = cfg.shapley
    if args.method is not None or args.samples is not None:
        shapley = replace(shapley, **{k: v for k, v in (("method", args.method), ("samples", args.samples)) if v is not None})
    return cfg.with_overrides(seed=args.seed, cap=args.cap, fallback=args.fallback, shapley=shapley)


def _write(args, name: str, text: str) -> None:
    if args.out is None:
        sys.stdout.write(text)
        return
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / name).write_text(text)
    except OSError as err:
        raise IoError(f"cannot write {args.out / name}: {err}") from err


def _cmd_shapley(args) -> None:
    cfg = _config(args)
    game = build_game(cfg).game
    cv = contributions(game, cfg)
    doc = {"labels": list(game.labels), "phi": cv.phi.tolist(), "method": cv.provenance}
    if not cv.exact:
        doc |= {"samples": cv.samples, "seed": cv.seed, "stderr": cv.stderr.tolist()}
    doc["config"] = cfg.to_dict()
    _write(args, "shapley.json", dumps(doc))


def _cmd_allocate(args) -> None:
    report = run_pipeline(_config(args))
    if args.out is None:
        sys.stdout.write(dumps(report.to_dict()))
    else:
        emit_report(report, ["json"], args.out)


def _cmd_suboptimal(args) -> None:
    cfg = _config(args)
    game = build_game(cfg).game
    cv = contributions(game, cfg)
    try:
        out = optimal_outcome(game, cv.phi)
        cert = epsilon_for(game, out.proportional)
        gaps = stability_gaps(game, out.proportional)
        sol = min_deviation_stable(game, cv.phi, cfg.deviation, cfg.solver)
    except FairShareError as err:
        raise PipelineError("fallback", err) from err
    doc = {
        "labels": list(game.labels),
        "phi": cv.phi.tolist(),
        "optimal_exists": out.exists,
        "proportional_epsilon": {
            "x": out.proportional.tolist(),
            "d": gaps.by_player().tolist(),
            "epsilon": cert.epsilon,
            "binding_player": cert.binding_player,
        },
        "stable_min_deviation": {
            "x": sol.x.tolist(),
            "objective": sol.objective,
            "baseline_x": sol.baseline_x.tolist(),
            "baseline_objective": sol.baseline_objective,
            "binding": [int(sol.order[k]) for k in sol.binding],
        },
        "config": cfg.to_dict(),
    }
    _write(args, "suboptimal.json", dumps(doc))


def _cmd_sensitivity(args) -> None:
    cfg = _config(args)
    game = build_game(cfg).game
    cv = contributions(game, cfg)
    try:
        if args.query == "new-agent":
            doc = verdict_to_dict(admit_new_agent(game, cv.phi, args.phi_new)) | {"phi_new": args.phi_new}
        elif args.delta is None:
            doc = verdict_to_dict(perturb_interval(game, cv.phi, args.player)) | {"player": args.player}
        else:
            v = perturb_feasible(game, cv.phi, args.player, args.delta)
            doc = verdict_to_dict(v) | {"player": args.player, "delta": args.delta}
    except FairShareError as err:
        raise PipelineError("sensitivity", err) from err
    doc["config"] = cfg.to_dict()
    _write(args, "sensitivity.json", dumps(doc))


def _cmd_valuate(args) -> None:
    game = build_game(_config(args)).game
    _write(args, "game.json", dumps(game_to_dict(game)))


def _cmd_synth(args) -> None:
    if args.default or args.config is None:
        synth = default_synth_config()
    else:
        cfg = _config(args)
        if cfg.synth is None:
            raise ValidationError("config has no 'synth' section")
        synth = synth_config_for(cfg)[0]
    if args.seed is not None:
        synth = SynthConfig(synth.players, args.seed, synth.slope)
    _write(args, "datasets.csv", datasets_to_csv(generate_synthetic(synth)))


def _cmd_report(args) -> None:
    report = load_report(args.report) if args.report is not None else run_pipeline(_config(args))
    if args.out is None:
        raise ValidationError("report needs --out DIR")
    emit_report(report, args.formats, args.out)


COMMANDS = {
    "shapley": _cmd_shapley,
    "allocate": _cmd_allocate,
    "suboptimal": _cmd_suboptimal,
    "sensitivity": _cmd_sensitivity,
    "valuate": _cmd_valuate,
    "synth": _cmd_synth,
    "report": _cmd_report,
}


def _exit_code(err: BaseException) -> int:
    if isinstance(err, PipelineError):
        return _exit_code(err.cause)
    if isinstance(err, (IoError, OSError)) and not isinstance(err, ValidationError):
        return EXIT_IO
    return EXIT_INVALID


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.verb](args)
    except (FairShareError, OSError) as err:
        print(f"fairshare: error: {err}", file=sys.stderr)
        return _exit_code(err)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
