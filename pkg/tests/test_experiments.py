import csv
import io
import math

import pytest

from heightpack.env import ConfigError
from heightpack.experiments import (REFERENCE_FILL_RATES, RunReport, _mean_std, aggregate,
                                    builtin_experiment, config_from_dict, learning_curves,
                                    load_config, mini_experiment, resolve_experiment,
                                    rows_to_csv, run_experiment, run_heuristics,
                                    train_config_for)


def test_table_snapshot():
    expected = {
        1: (8, (100, 100), [8, 8, 16, 16]),
        2: (8, (120, 80), [8, 8, 16, 16]),
        3: (8, (80, 120), [8, 8, 16, 16]),
        4: (7, (100, 100), [6, 6, 9, 9]),
        5: (7, (120, 80), [6, 6, 9, 9]),
        6: (7, (80, 120), [6, 6, 9, 9]),
    }
    for i, (side, heights, qty) in expected.items():
        c = builtin_experiment(i)
        assert all(b.width == side and b.length == side for b in c.boards)
        assert tuple(b.height_limit for b in c.boards) == heights
        assert [p.initial_qty for p in c.catalogue] == qty
        assert [(p.length, p.width) for p in c.catalogue] == [(2, 2), (2, 2), (2, 1), (2, 1)]
        if i in (1, 4):
            assert c.uniform_height and all(p.height == 100 for p in c.catalogue)
        else:
            assert [p.height for p in c.catalogue] == [115, 75, 115, 75]


def test_area_accounting():
    # eight-cell boards are exactly filled; seven-cell boards hold 84 of 98 cells
    assert sum(p.area * p.initial_qty for p in builtin_experiment(1).catalogue) == 128
    assert sum(p.area * p.initial_qty for p in builtin_experiment(4).catalogue) == 84


def test_unknown_experiment():
    with pytest.raises(ConfigError):
        builtin_experiment(7)
    with pytest.raises(ConfigError):
        resolve_experiment("nope")


def test_mini():
    c = resolve_experiment("mini")
    assert c.label == "mini"
    assert [p.initial_qty for p in c.catalogue] == [2, 2, 4, 4]
    assert c.make_env().obs_size == 36


def test_yaml_round_trip(tmp_path):
    c = builtin_experiment(5)
    path = tmp_path / "e.yaml"
    path.write_text(c.to_yaml())
    back = load_config(path)
    assert back.boards == c.boards and back.catalogue == c.catalogue
    assert resolve_experiment(str(path)).label == "exp5"


@pytest.mark.parametrize("data", [
    {"boards": [{"width": 2}], "pieces": []},
    {"boards": [{"width": 2, "length": 2, "height_limit": 10}],
     "pieces": [{"length": 1, "width": 1, "height": 5, "quantity": 1}], "train": {"bogus": 1}},
])
def test_bad_configs(data):
    with pytest.raises(ConfigError):
        config_from_dict(data)


def test_load_config_rejects_non_mapping(tmp_path):
    path = tmp_path / "x.yaml"
    path.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_train_config_for():
    c = config_from_dict({"boards": [{"width": 2, "length": 2, "height_limit": 10}],
                          "pieces": [{"length": 1, "width": 1, "height": 5, "quantity": 1}],
                          "train": {"gamma": 0.9}})
    tc = train_config_for(c, "a2c", 3, 100)
    assert tc.gamma == 0.9 and tc.seed == 3 and tc.total_steps == 100 and tc.epochs == 1
    assert train_config_for(c, "ppo", 0).total_steps == 500_000
    with pytest.raises(ConfigError):
        train_config_for(c, "dqn", 0)


def test_heuristic_only_reports():
    r1 = run_heuristics(builtin_experiment(1))
    assert r1["maxrect-bl/none"].coverage == [100.0, 100.0]
    r2 = run_heuristics(builtin_experiment(2))
    assert r2["maxrect-bl/none"].coverage[1] == 50.0
    assert len(r2["maxrect-bl/none"].skipped) == 16
    r4 = run_heuristics(builtin_experiment(4))
    assert r4["maxrect-bl/none"].placement_rate == 1.0
    assert r4["maxrect-bl/none"].coverage[0] == pytest.approx(100 * 42 / 49)


def test_mean_std():
    assert _mean_std([0.5]) == (0.5, None, 1)
    assert _mean_std([0.5, 0.5]) == (0.5, 0.0, 2)
    mean, std, n = _mean_std([1.0, 2.0, 3.0])
    assert (mean, std, n) == (2.0, 1.0, 3)
    assert math.isnan(_mean_std([])[0])


def _fake_report(values):
    seeds = [{"agent": "ppo", "seed": i, "best_placement_rate": v,
              "final": {"placement_rate": v, "coverage": [v * 100, v * 50]},
              "curve": [{"steps": 10, "mean_reward": 1.0, "mean_episode_length": 5.0,
                         "placement_rate": v}]}
             for i, v in enumerate(values)]
    return RunReport("exp2", 2, {"ppo": seeds}, {})


def test_aggregate_std_rules():
    rows = aggregate([_fake_report([0.8])])
    row = next(r for r in rows if r["metric"] == "placement_rate")
    assert row["std"] is None and row["n"] == 1
    assert (row["reference_mean"], row["reference_std"]) == REFERENCE_FILL_RATES[(2, "ppo")]
    rows = aggregate([_fake_report([0.8, 0.8])])
    assert next(r for r in rows if r["metric"] == "placement_rate")["std"] == 0.0
    with pytest.raises(ValueError):
        aggregate([])


def test_csv_and_curves():
    report = _fake_report([0.5, 1.0])
    text = rows_to_csv(aggregate([report]))
    rows = list(csv.DictReader(io.StringIO(text)))
    pr = next(r for r in rows if r["metric"] == "placement_rate")
    assert pr["mean"] == "0.750000" and pr["std"] == "0.353553"
    curves = learning_curves(report, "mean_reward")
    assert curves == {"ppo/seed0": [(10.0, 1.0)], "ppo/seed1": [(10.0, 1.0)]}


def test_run_experiment_resumable(tmp_path):
    c = mini_experiment()
    a = run_experiment(c, ["a2c"], strategies=["none"], seeds=[0, 1], steps=64, out_dir=tmp_path)
    summary = tmp_path / "mini" / "a2c" / "seed0.json"
    stamp = summary.stat().st_mtime_ns
    log_bytes = (tmp_path / "mini" / "a2c" / "seed0.jsonl").read_bytes()
    b = run_experiment(c, ["a2c"], strategies=["none"], seeds=[0, 1], steps=64, out_dir=tmp_path)
    assert summary.stat().st_mtime_ns == stamp
    assert a.agents == b.agents
    assert (tmp_path / "mini" / "a2c" / "seed0.jsonl").read_bytes() == log_bytes
    assert rows_to_csv(aggregate([a])) == rows_to_csv(aggregate([b]))


def test_run_experiment_needs_seed():
    with pytest.raises(ConfigError):
        run_experiment(mini_experiment(), ["ppo"], seeds=[])
