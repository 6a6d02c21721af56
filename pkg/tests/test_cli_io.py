import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from hourly_dr.cli import main
from hourly_dr.game import PriceModel, GameInstance, make_game
from hourly_dr.io import (InputError, game_from_dict, game_to_dict, ingest_consumers, load_game, profile_csv,
                          read_profile_csv, save_game)

FIXTURES = Path(__file__).parent / "fixtures"
EXAMPLE = Path(__file__).resolve().parents[1] / "src" / "hourly_dr" / "data" / "example_game.json"


def _write(tmp_path, name, obj):
    path = tmp_path / name
    path.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(path)


GOOD = {"prices": [{"alpha": 1.0, "beta": 0.5}, {"alpha": 2.0, "beta": 0.5}],
        "consumers": [{"E": 1.0, "lower": [0, 0], "upper": [1, 1]}]}

MALFORMED = [
    ({**GOOD, "consumers": []}, "no players"),
    ({"prices": GOOD["prices"]}, "consumers"),
    ({"consumers": GOOD["consumers"]}, "prices"),
    ({**GOOD, "prices": [{"alpha": 1.0}, {"alpha": 2.0, "beta": 0.5}]}, "prices[0].beta"),
    ({**GOOD, "prices": [{"alpha": "x", "beta": 1}, {"alpha": 2.0, "beta": 0.5}]}, "prices[0].alpha"),
    ({**GOOD, "consumers": [{"E": 1.0, "upper": [1, 1, 1]}]}, "consumers[0].upper"),
    ({**GOOD, "consumers": [{"lower": [0, 0], "upper": [1, 1]}]}, "consumers[0].E"),
    ({**GOOD, "consumers": [{"E": 5.0, "upper": [1, 1]}]}, "consumers[0]"),
    ({**GOOD, "consumers": [{"E": 1.0, "lower": [-1, 0], "upper": [1, 1]}]}, "consumers[0]"),
    ({**GOOD, "nonflexible": [1.0]}, "nonflexible"),
    ({**GOOD, "N": 3}, "N"),
    ({**GOOD, "T": 5}, "T"),
    ({"cost": {"c0": 0, "c1": 1, "c2": 1}, "consumers": GOOD["consumers"]}, "nonflexible"),
    ({"cost": {"c0": 0, "c1": 1}, "nonflexible": [1, 1], "consumers": GOOD["consumers"]}, "cost.c2"),
]


@pytest.mark.parametrize("doc, field", MALFORMED)
def test_malformed_games_name_the_field(tmp_path, capsys, doc, field):
    with pytest.raises(InputError, match=field.replace("[", r"\[").replace("]", r"\]")):
        game_from_dict(doc)
    path = _write(tmp_path, "bad.json", doc)
    assert main(["solve", path, "-o", str(tmp_path)]) == 1
    assert field in capsys.readouterr().err


def test_invalid_json_and_missing_file(tmp_path, capsys):
    assert main(["solve", _write(tmp_path, "x.json", "{not json"), "-o", str(tmp_path)]) == 1
    assert "line 1" in capsys.readouterr().err
    assert main(["solve", str(tmp_path / "absent.json")]) == 1
    assert "absent.json" in capsys.readouterr().err


def test_game_round_trip(tmp_path, rng):
    from conftest import random_affine_game
    for _ in range(5):
        game = random_affine_game(rng, 3, 4)
        assert game_from_dict(json.loads(json.dumps(game_to_dict(game)))) == game
    game = make_game([1, 2], [0.1, 0.2], [1.0], [[0, 0]], [[1, 1]], nonflexible=[3.0, 4.0])
    save_game(game, tmp_path / "g.json")
    assert load_game(tmp_path / "g.json") == game
    assert load_game(EXAMPLE) == game_from_dict(game_to_dict(load_game(EXAMPLE)))


def test_cost_based_game():
    doc = {"cost": {"c0": 0.711, "c1": -0.0417, "c2": 0.00295}, "nonflexible": [40.0, 50.0],
           "consumers": GOOD["consumers"]}
    game = game_from_dict(doc)
    np.testing.assert_allclose(game.prices.alpha, -0.0417 + 2 * 0.00295 * np.array([40.0, 50.0]))


def test_profile_csv_round_trip(rng):
    x = rng.uniform(0, 5, (3, 4))
    text = profile_csv(x)
    assert text.splitlines()[0] == "player,t,load"
    np.testing.assert_allclose(read_profile_csv(text, 3, 4), x, rtol=1e-5)


def test_ingest_rule():
    keys, consumers = ingest_consumers(FIXTURES / "charging.csv")
    assert keys == [("h1", "1"), ("h1", "2"), ("h2", "1"), ("h3", "1")]
    c = consumers[0]
    assert c.energy == pytest.approx(12.0)
    np.testing.assert_array_equal(c.upper, np.where(np.isin(np.arange(24), range(18, 22)), 3.0, 0.0))
    np.testing.assert_array_equal(c.lower, 0.0)
    zero = consumers[2]
    assert zero.energy == 0.0 and not zero.upper.any()
    partial = consumers[3]
    assert partial.energy == pytest.approx(7.2 + 7.2 + 2.5)
    np.testing.assert_array_equal(partial.upper[:3], 7.2)


def test_ingested_game_round_trips():
    _, consumers = ingest_consumers(FIXTURES / "charging.csv")
    game = GameInstance(PriceModel.affine(np.full(24, 0.2), np.full(24, 0.01)), consumers)
    assert game_from_dict(json.loads(json.dumps(game_to_dict(game)))) == game


@pytest.mark.parametrize("edit, message", [
    (lambda rows: rows.__setitem__(5, "h1,1,4,-2.0"), "row 6"),
    (lambda rows: rows.pop(5), "missing hour(s) 4"),
    (lambda rows: rows.__setitem__(5, "h1,1,3,0.0"), "row 6: duplicate hour 3"),
    (lambda rows: rows.__setitem__(5, "h1,1,24,0.0"), "row 6: hour 24"),
    (lambda rows: rows.__setitem__(5, "h1,1,4,abc"), "row 6"),
    (lambda rows: rows.__setitem__(0, "consumer,day,hour,kw"), "consumer_id"),
])
def test_ingest_errors(tmp_path, edit, message):
    rows = (FIXTURES / "charging.csv").read_text().splitlines()
    edit(rows)
    path = tmp_path / "bad.csv"
    path.write_text("\n".join(rows) + "\n")
    with pytest.raises(InputError, match=message.replace("(", r"\(").replace(")", r"\)")):
        ingest_consumers(path)


def test_cli_solve_example(tmp_path, capsys):
    assert main(["solve", str(EXAMPLE), "-o", str(tmp_path / "c"), "--history"]) == 0
    report = json.loads((tmp_path / "c" / "report.json").read_text())
    assert report["converged"] and report["final_residual"] < 1e-3
    assert (tmp_path / "c" / "history.csv").exists()
    assert main(["solve", str(EXAMPLE), "-o", str(tmp_path / "s"), "--algorithm", "sird"]) == 0
    c = read_profile_csv((tmp_path / "c" / "profile.csv").read_text(), 3, 4)
    s = read_profile_csv((tmp_path / "s" / "profile.csv").read_text(), 3, 4)
    np.testing.assert_allclose(c, s, atol=1e-2)
    from hourly_dr.solvers import ne_residual
    assert ne_residual(load_game(EXAMPLE), c) < 1e-3


def test_cli_budget_exhaustion_exit_code(tmp_path):
    assert main(["solve", str(EXAMPLE), "-o", str(tmp_path), "--k-max", "1", "--eps-stop", "1e-12"]) == 2


def test_cli_rejects_bad_scalar_overrides(tmp_path, capsys):
    assert main(["solve", str(EXAMPLE), "-o", str(tmp_path), "--eps-stop", "0"]) == 1
    assert "eps_stop" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["solve", str(EXAMPLE), "--gamma", "fast"])


def test_cli_optimal_and_poa(tmp_path, capsys):
    assert main(["optimal", str(EXAMPLE), "-o", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "report.json").read_text())["converged"]
    capsys.readouterr()
    assert main(["poa", str(EXAMPLE), "--empirical", "-o", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "bound (tight)" in out and "empirical PoA" in out
    rep = json.loads((tmp_path / "poa.json").read_text())
    assert 1 - 1e-9 <= rep["empirical_poa"] <= rep["bound_tight"] <= rep["bound_simplified"]


def test_cli_poa_undefined(tmp_path, capsys):
    doc = {**GOOD, "consumers": [{"E": 1.0, "upper": [1, 0]}]}
    assert main(["poa", _write(tmp_path, "g.json", doc)]) == 1
    assert "period 1" in capsys.readouterr().err


def test_cli_simulate_deterministic(tmp_path):
    campaign = _write(tmp_path, "c.json", {"N": 3, "T": 24, "days": 2, "seed": 5})
    assert main(["simulate", campaign, "-o", str(tmp_path / "a")]) == 0
    assert main(["simulate", campaign, "-o", str(tmp_path / "b")]) == 0
    for name in ("days.csv", "summary.csv", "profiles.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_cli_simulate_seed_sources(tmp_path, monkeypatch):
    campaign = _write(tmp_path, "c.json", {"N": 3, "days": 1, "scenarios": ["offline"]})
    monkeypatch.setenv("DR_SEED", "4")
    assert main(["simulate", campaign, "-o", str(tmp_path / "env")]) == 0
    assert main(["simulate", campaign, "-o", str(tmp_path / "flag"), "--seed", "4"]) == 0
    assert main(["simulate", campaign, "-o", str(tmp_path / "other"), "--seed", "5"]) == 0
    env, flag, other = ((tmp_path / d / "days.csv").read_text() for d in ("env", "flag", "other"))
    assert env == flag != other
    monkeypatch.setenv("DR_SEED", "four")
    assert main(["simulate", campaign, "-o", str(tmp_path / "bad")]) == 1


def test_cli_simulate_single_scenario(tmp_path):
    campaign = _write(tmp_path, "c.json", {"N": 3, "days": 1, "seed": 1, "scenarios": ["optimal"]})
    assert main(["simulate", campaign, "-o", str(tmp_path)]) == 0
    summary = (tmp_path / "summary.csv").read_text().splitlines()
    assert len(summary) == 2 and summary[1].startswith("optimal,")


def test_cli_simulate_bad_campaign(tmp_path, capsys):
    assert main(["simulate", _write(tmp_path, "c.json", {"N": 3, "speed": 2}), "-o", str(tmp_path)]) == 1
    assert "speed" in capsys.readouterr().err


def test_cli_forecast_fit(tmp_path, capsys):
    from hourly_dr.forecasting import ForecastModel, simulate_path
    from hourly_dr.online import synthetic_seasonality
    model = ForecastModel(synthetic_seasonality(30), 0.198, 0.117)
    path = simulate_path(model, 8760, rng=3)
    lines = ["hour,load"] + [f"{h},{v:.6f}" for h, v in enumerate(path)]
    history = _write(tmp_path, "h.csv", "\n".join(lines) + "\n")
    assert main(["forecast-fit", history, "-o", str(tmp_path / "m.json")]) == 0
    fitted = json.loads(capsys.readouterr().out)
    assert fitted["m"] == pytest.approx(0.198, rel=0.15)
    assert len(json.loads((tmp_path / "m.json").read_text())["P"]) == 168
    bad = _write(tmp_path, "b.csv", "hour,load\n0,1\n1,-1\n")
    assert main(["forecast-fit", bad]) == 1


def test_cli_bench_small(tmp_path, capsys):
    assert main(["bench", "--sizes", "3,6", "--repeats", "1", "-o", str(tmp_path / "b.csv")]) == 0
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0].startswith("N,seed,algorithm") and len(lines) == 5
    assert main(["bench", "--sizes", "a,b"]) == 1


def test_console_script_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "hourly_dr.cli", "solve", str(EXAMPLE), "-o", str(tmp_path)],
                         capture_output=True, text=True)
    assert out.returncode == 0 and "converged" in out.stdout
