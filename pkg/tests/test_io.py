import json

import numpy as np
import pytest

from fairshare.allocation import is_stable_bruteforce
from fairshare.datasets import (
    datasets_to_csv,
    load_datasets_csv,
    parse_datasets_csv,
    partition_by_confidence,
)
from fairshare.errors import (
    BadConfig,
    IoError,
    MissingColumn,
    NonpositiveNoise,
    ParseError,
    PipelineError,
    RaggedDimensions,
)
from fairshare.game import game_from_valuation
from fairshare.pipeline import AllocationReport, PipelineConfig, load_config, run_pipeline
from fairshare.report import emit_report, load_report, render_csv, render_json, render_svg
from fairshare.serialize import content_hash, dumps, format_float
from fairshare.suboptimal import epsilon_bruteforce
from fairshare.synth import PlayerSpec, SynthConfig, default_synth_config, generate_synthetic
from fairshare.valuation import PlayerDataset, ValuationSpec, predict_proba

TRIO = {"n": 3, "labels": ["A", "B", "C"],
       "values": {"0": 1, "1": 1, "2": 1, "0,1": 2, "0,2": 2, "1,2": 2, "0,1,2": 3}}
TWO = {"n": 2, "values": {"0": 0.9, "1": 1.0, "0,1": 1.0}}


# ---------------------------------------------------------------- serialise

@pytest.mark.parametrize("x", [0.1, 1 / 3, 1e-300, 5e-324, 1e22, 2.0, 123456789.123, -0.0])
def test_float_roundtrip(x):
    s = format_float(x)
    assert float(s) == x and float(json.loads(s)) == x


def test_integral_floats_keep_decimal_point():
    assert format_float(3.0) == "3.0"
    assert dumps({"a": [1, 2.0]}) == '{\n  "a": [1, 2.0]\n}\n'


def test_infinity_written_as_null():
    assert json.loads(dumps({"iv": [float("-inf"), 1.0]})) == {"iv": [None, 1.0]}


def test_dumps_reload_is_fixed_point(rng):
    doc = {"x": rng.normal(size=7).tolist(), "nested": [{"k": float(rng.random())}, []], "s": "é"}
    text = dumps(doc)
    assert dumps(json.loads(text)) == text


def test_content_hash_ignores_key_order():
    assert content_hash({"a": 1, "b": [0.5]}) == content_hash({"b": [0.5], "a": 1})
    assert content_hash({"a": 1.0}) != content_hash({"a": 1.0000000000000002})


# -------------------------------------------------------------------- synth

def test_point_player_row():
    cfg = SynthConfig.from_dict({"players": [{"rows": 1, "dist": {"kind": "point", "x": 0.0}, "noise_var": 0.3}]})
    (d,) = generate_synthetic(cfg)
    assert d.X.tolist() == [[0.0]] and d.y.tolist() == [0.0] and d.noise_var.tolist() == [0.3]


def test_synth_deterministic():
    cfg = default_synth_config()
    a = datasets_to_csv(generate_synthetic(cfg))
    b = datasets_to_csv(generate_synthetic(cfg))
    assert a == b
    other = SynthConfig(cfg.players, cfg.seed + 1, cfg.slope)
    assert datasets_to_csv(generate_synthetic(other)) != a


def test_default_config_shape():
    cfg = default_synth_config()
    assert len(cfg.players) == 7
    assert cfg.players[0].dist == "point" and cfg.players[0].params == (0.0,)
    assert cfg.players[2] == cfg.players[3]


@pytest.mark.parametrize("kind,extra", [("fisher_linear", {}), ("mi_bayes_linear", {"prior_cov": [[1.0]]})])
def test_default_config_identical_players_have_close_contributions(kind, extra):
    from fairshare.shapley import shapley_exact

    g = game_from_valuation(generate_synthetic(default_synth_config()), ValuationSpec(kind, **extra))
    phi = shapley_exact(g).phi
    assert abs(phi[0]) < 1e-12
    assert abs(phi[2] - phi[3]) / phi[2] < 0.05


@pytest.mark.parametrize("doc", [
    {"players": []},
    {"players": [{"rows": 0, "dist": {"kind": "point", "x": 0}, "noise_var": 1}]},
    {"players": [{"rows": 3, "dist": {"kind": "uniform", "a": 2, "b": 1}, "noise_var": 1}]},
    {"players": [{"rows": 3, "dist": {"kind": "normal", "mu": 0, "s": -1}, "noise_var": 1}]},
    {"players": [{"rows": 3, "dist": {"kind": "beta", "a": 1}, "noise_var": 1}]},
    {"players": [{"rows": 3, "dist": {"kind": "point", "x": 0}, "noise_var": 0}]},
    {"players": [{"rows": 3, "dist": {"kind": "point", "x": 0, "y": 1}, "noise_var": 1}]},
    {"players": [{"rows": 3, "dist": {"kind": "point", "x": 0}, "noise_var": 1}], "colour": 1},
])
def test_bad_synth_configs(doc):
    with pytest.raises(BadConfig):
        SynthConfig.from_dict(doc)


def test_player_spec_roundtrip():
    spec = PlayerSpec.from_dict({"rows": 4, "dist": {"kind": "normal", "mu": 1, "s": 2}, "noise_var": 0.5})
    assert PlayerSpec.from_dict(spec.to_dict()) == spec


# ----------------------------------------------------------------- datasets

def test_two_row_csv():
    data = parse_datasets_csv("player,x1,y,noise_var\n0,1.0,2.0,0.5\n1,3.0,4.0,0.25\n")
    assert len(data) == 2 and [d.rows for d in data] == [1, 1]
    assert data[1].X.tolist() == [[3.0]] and data[1].noise_var.tolist() == [0.25]


def test_csv_roundtrip(tmp_path, rng):
    data = [PlayerDataset(rng.normal(size=(k, 2)), rng.normal(size=k), rng.uniform(0.1, 1, k)) for k in (3, 1, 4)]
    path = tmp_path / "d.csv"
    path.write_text(datasets_to_csv(data))
    back = load_datasets_csv(path)
    for a, b in zip(data, back):
        assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y) and np.array_equal(a.noise_var, b.noise_var)


def test_csv_zero_noise_fails_at_valuation():
    data = parse_datasets_csv("player,x1,y,noise_var\n0,1.0,2.0,0\n")
    with pytest.raises(NonpositiveNoise):
        game_from_valuation(data, ValuationSpec("fisher_linear"))


def test_csv_parse_error_has_line():
    with pytest.raises(ParseError) as err:
        parse_datasets_csv("player,x1,y,noise_var\n0,1,2,1\n0,abc,2,1\n")
    assert err.value.line == 3


@pytest.mark.parametrize("text,exc", [
    ("", MissingColumn),
    ("id,x1,y,noise_var\n", MissingColumn),
    ("player,x1,y\n", MissingColumn),
    ("player,x1,x3,y,noise_var\n", MissingColumn),
    ("player,x1,y,noise_var\n0,1,2\n", RaggedDimensions),
    ("player,x1,y,noise_var\n1,1,2,1\n", ParseError),
    ("player,x1,y,noise_var\nA,1,2,1\n", ParseError),
    ("player,x1,y,noise_var\n", ParseError),
])
def test_csv_errors(text, exc):
    with pytest.raises(exc):
        parse_datasets_csv(text)


def test_csv_missing_file(tmp_path):
    with pytest.raises(IoError):
        load_datasets_csv(tmp_path / "none.csv")


def test_partition_by_confidence(rng):
    X = rng.normal(0, 3, (3000, 2))
    pool = PlayerDataset(X, (X[:, 0] > 0).astype(float), np.ones(3000))
    theta = np.array([1.0, -0.5])
    parts = partition_by_confidence(pool, theta, size=150, seed=1)
    assert [p.rows for p in parts] == [150, 150, 150]
    for (lo, hi), part in zip([(0.25, 0.75), (0.1, 0.9), (0.05, 0.95)], parts):
        p = predict_proba(part.X, theta)
        assert np.all((p > lo) & (p < hi))
    # no row is handed to two hospitals
    rows = np.concatenate([p.X for p in parts])
    assert np.unique(rows, axis=0).shape[0] == 450


def test_partition_too_small(rng):
    pool = PlayerDataset(rng.normal(size=(20, 1)), np.zeros(20), np.ones(20))
    with pytest.raises(BadConfig):
        partition_by_confidence(pool, [1.0], size=50)


# ----------------------------------------------------------------- pipeline

def test_pipeline_pair():
    r = run_pipeline({"game": {"n": 2, "values": {"0": 1, "1": 1, "0,1": 2}}})
    assert r.status == "optimal" and r.payoffs.tolist() == [2.0, 2.0]


def test_pipeline_hospitals():
    r = run_pipeline({"game": {"n": 3, "values": {"0": 317, "1": 1369, "2": 2801, "0,1": 1686, "0,2": 3118,
                                                  "1,2": 4170, "0,1,2": 4487}}})
    assert r.status == "optimal"
    assert np.all(np.abs(r.payoffs - [508, 2194, 4488]) <= 1)


def test_pipeline_epsilon_fallback():
    r = run_pipeline({"game": TWO, "fallback": "proportional_epsilon"})
    assert r.status == "proportional_epsilon_stable"
    assert r.diagnostics["epsilon"] == pytest.approx(0.9 - 9 / 11, abs=1e-12)
    assert r.diagnostics["binding"] == [0]


def test_pipeline_min_deviation_fallback():
    r = run_pipeline({"game": TWO})
    assert r.status == "stable_nonproportional"
    np.testing.assert_allclose(r.payoffs, [0.9, 1.0])
    assert r.diagnostics["proportional_violations"] == [0]


def test_pipeline_monte_carlo_flagged():
    r = run_pipeline({"game": TRIO, "shapley": {"method": "monte_carlo", "samples": 100}, "seed": 5})
    assert r.shapley["method"] == "monte_carlo" and r.shapley["samples"] == 100 and r.shapley["seed"] == 5


def test_pipeline_auto_switches_to_monte_carlo():
    r = run_pipeline({"game": TRIO, "shapley": {"exact_max_n": 2, "samples": 64}})
    assert r.shapley["method"] == "monte_carlo"


def test_pipeline_sensitivity_queries():
    r = run_pipeline({"game": TRIO, "sensitivity": {"new_agent": [0.5], "perturb": [{"player": 0, "delta": -0.5}]}})
    assert r.sensitivity["new_agent"][0]["feasible"]
    assert r.sensitivity["perturb"][0]["feasible"]


@pytest.mark.parametrize("doc", [
    {},
    {"game": TRIO, "synth": "default"},
    {"datasets": "x.csv"},
    {"game": TRIO, "fallback": "shrug"},
    {"game": TRIO, "seed": -1},
    {"game": TRIO, "shapley": {"method": "guess"}},
    {"game": TRIO, "solver": {"temperature": 1}},
    {"game": TRIO, "colour": "red"},
])
def test_bad_pipeline_configs(doc):
    with pytest.raises(BadConfig):
        PipelineConfig.from_dict(doc)


def test_pipeline_wraps_stage():
    with pytest.raises(PipelineError) as err:
        run_pipeline({"game": {"n": 2, "values": {"0": 1, "1": 1}}})
    assert err.value.stage == "load"
    with pytest.raises(PipelineError) as err:
        run_pipeline({"game": {"n": 2, "values": {"0": 2, "1": 1, "0,1": 1.5}}})
    assert err.value.stage == "allocation"


def test_pipeline_from_csv(tmp_path):
    (tmp_path / "d.csv").write_text(datasets_to_csv(generate_synthetic(default_synth_config())))
    (tmp_path / "cfg.json").write_text(json.dumps({"datasets": "d.csv", "valuation": {"kind": "fisher_linear"}}))
    r = run_pipeline(load_config(tmp_path / "cfg.json"))
    assert r.status == "optimal" and r.source == "datasets"
    assert r.provenance["input_files"][0]["name"] == "d.csv"


def test_default_synth_contrast():
    fisher = run_pipeline({"synth": "default", "valuation": {"kind": "fisher_linear"}})
    mi = run_pipeline({"synth": "default", "valuation": {"kind": "mi_bayes_linear", "prior_cov": [[1.0]]},
                       "fallback": "proportional_epsilon"})
    assert fisher.status == "optimal"
    assert mi.status != "optimal" and mi.diagnostics["proportional_violations"]


@pytest.mark.parametrize("fallback", ["stable_min_deviation", "proportional_epsilon"])
def test_status_soundness(rng, fallback):
    from conftest import random_monotone_game
    from fairshare.game import game_to_dict

    for _ in range(15):
        g = random_monotone_game(rng, int(rng.integers(2, 6)), rng.choice(["max", "coverage", "increments"]))
        if g.grand_value <= 0:
            continue
        try:
            r = run_pipeline({"game": game_to_dict(g), "fallback": fallback})
        except PipelineError:
            continue  # null player whose prefix needs payment
        if r.status in ("optimal", "stable_nonproportional"):
            assert is_stable_bruteforce(g, r.payoffs)
        else:
            assert epsilon_bruteforce(g, r.payoffs) <= r.diagnostics["epsilon"] + 1e-12


def test_pipeline_deterministic():
    cfg = {"synth": "default", "valuation": {"kind": "mi_bayes_linear", "prior_cov": [[1.0]]}}
    assert render_json(run_pipeline(cfg)) == render_json(run_pipeline(cfg))


def test_report_reproducible_from_embedded_config():
    r = run_pipeline({"game": TWO, "seed": 3})
    again = run_pipeline(r.config)
    assert render_json(again) == render_json(r)


# ------------------------------------------------------------------- report

def test_trio_csv():
    r = run_pipeline({"game": TRIO})
    assert render_csv(r).splitlines() == ["player,phi,bound,x", "A,1,1,3", "B,1,2,3", "C,1,3,3"]


def test_json_roundtrip_bytes(tmp_path):
    r = run_pipeline({"game": TWO})
    (path,) = emit_report(r, ["json"], tmp_path)
    text = path.read_text()
    assert render_json(load_report(path)) == text
    assert render_json(AllocationReport.from_dict(json.loads(text))) == text


def test_svg_structure():
    r = run_pipeline({"game": TRIO})
    svg = render_svg(r)
    assert svg.count('class="bar"') == 3 and svg.count('class="bound"') == 3
    assert svg.startswith("<svg") and 'viewBox="0 0 280 310"' in svg


def test_emit_all_formats(tmp_path):
    r = run_pipeline({"game": TRIO})
    paths = emit_report(r, ["svg", "json", "csv"], tmp_path / "out")
    assert sorted(p.name for p in paths) == ["bounds.svg", "payoffs.csv", "report.json"]
    with pytest.raises(BadConfig):
        emit_report(r, ["pdf"], tmp_path)


def test_emit_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(IoError):
        emit_report(run_pipeline({"game": TRIO}), ["json"], blocker / "sub")
