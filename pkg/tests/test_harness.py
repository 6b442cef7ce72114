import csv
import os

import numpy as np
import pytest

from perturbrl import harness
from perturbrl.disturbance import DisturbanceSpec, Kind, Site
from perturbrl.errors import ConfigError, UsageError


@pytest.fixture(scope="module")
def small_agent():
    agent, curve, failed = harness.train("cartpole", "ppo", 0, 2000,
                                         eval_interval=1000, eval_episodes=2)
    assert not failed
    return agent


def _summary(rec):
    return harness.EvalSummary(rec.returns, rec.lengths, rec.rmses)


def test_train_returns_curve_and_checkpoint(tmp_path):
    ckpt = str(tmp_path / "a.ckpt")
    agent, curve, failed = harness.train("cartpole", "ppo", 1, 2000,
                                         eval_interval=1000, eval_episodes=2,
                                         checkpoint_path=ckpt)
    assert not failed
    assert os.path.exists(ckpt)
    steps = [row[0] for row in curve]
    assert steps[0] == 0 and steps == sorted(steps)
    for _, ret, rmse in curve:
        assert 0.0 < ret <= 1.0 and rmse >= 0.0
    clone = harness.load_agent(ckpt, "cartpole")
    obs = np.array([0.1, 0.0, 0.0, 0.0], dtype=np.float32)
    np.testing.assert_array_equal(agent.act(obs), clone.act(obs))


def test_load_agent_task_mismatch(tmp_path):
    ckpt = str(tmp_path / "b.ckpt")
    agent, _, _ = harness.train("cartpole", "ppo", 0, 500, eval_interval=10_000,
                                eval_episodes=1, checkpoint_path=ckpt)
    with pytest.raises(UsageError):
        harness.load_agent(ckpt, "quadrotor")


def test_evaluate_deterministic(small_agent):
    spec = DisturbanceSpec(site=Site.DYNAMICS, kind=Kind.WHITE_NOISE,
                           level=1.0, dim=2)
    a = harness.evaluate(small_agent, "cartpole", spec, n=4, seed=0)
    b = harness.evaluate(small_agent, "cartpole", spec, n=4, seed=0)
    assert a == b
    c = harness.evaluate(small_agent, "cartpole", spec, n=4, seed=1)
    assert a != c


def test_evaluate_level_zero_equals_clean(small_agent):
    spec = DisturbanceSpec(site=Site.OBSERVATION, kind=Kind.WHITE_NOISE,
                           level=0.0, dim=4)
    a = harness.evaluate(small_agent, "cartpole", spec, n=3, seed=0)
    b = harness.evaluate(small_agent, "cartpole", None, n=3, seed=0)
    assert a == b


def test_summary_aggregates_recomputable(small_agent):
    s = harness.evaluate(small_agent, "cartpole", n=5, seed=0)
    norm = [r / l for r, l in zip(s.returns, s.lengths)]
    assert s.mean_return == pytest.approx(np.mean(norm), abs=1e-12)
    assert s.std_return == pytest.approx(np.std(norm), abs=1e-12)
    assert s.mean_rmse == pytest.approx(np.mean(s.rmses), abs=1e-12)
    assert s.mean_len == pytest.approx(np.mean(s.lengths), abs=1e-12)
    assert all(0.0 < v <= 1.0 for v in norm)


def test_sweep_records(small_agent):
    recs = harness.sweep_1d(small_agent, "cartpole", Site.DYNAMICS,
                            Kind.WHITE_NOISE, [1.0, 0.0, 0.5], n=2, seed=0)
    assert [r.test_level for r in recs] == [0.0, 0.5, 1.0]
    for r in recs:
        assert r.task == "cartpole" and r.agent == "ppo"
        assert r.site == "dynamics" and r.kind == "white_noise"
        assert len(r.returns) == 2
    with pytest.raises(ConfigError):
        harness.sweep_1d(small_agent, "cartpole", Site.DYNAMICS,
                         Kind.WHITE_NOISE, [], n=2)


def test_sweep_parallel_matches_serial(small_agent):
    serial = harness.sweep_1d(small_agent, "cartpole", Site.ACTION,
                              Kind.WHITE_NOISE, [0.0, 0.5, 1.0], n=2, workers=1)
    parallel = harness.sweep_1d(small_agent, "cartpole", Site.ACTION,
                                Kind.WHITE_NOISE, [0.0, 0.5, 1.0], n=2, workers=3)
    assert serial == parallel


def test_persist_load_roundtrip(small_agent, tmp_path):
    recs = harness.sweep_1d(small_agent, "cartpole", Site.OBSERVATION,
                            Kind.IMPULSE, [0.0, 0.2], n=3, seed=0)
    conf = {"task": "cartpole", "agent": "ppo", "seed": 0}
    harness.persist(recs, str(tmp_path), conf)
    back = harness.load(str(tmp_path))
    assert back == recs


def test_results_csv_schema(small_agent, tmp_path):
    recs = harness.sweep_1d(small_agent, "cartpole", Site.DYNAMICS,
                            Kind.STEP, [1.0], n=2, seed=0)
    harness.persist(recs, str(tmp_path), {})
    with open(tmp_path / "results.csv", newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0][:14] == ["task", "agent", "seed", "site", "kind",
                            "train_level", "test_level", "param_overrides",
                            "n_episodes", "mean_return", "std_return",
                            "mean_rmse", "std_rmse", "mean_len"]
    row = rows[1]
    s = _summary(recs[0])
    # floats are written with repr, so a plain csv reparse recovers them exactly
    assert float(row[9]) == s.mean_return
    assert float(row[11]) == s.mean_rmse
    assert int(row[8]) == 2


def test_persist_byte_identical_reruns(small_agent, tmp_path):
    conf = {"task": "cartpole", "seed": 0}
    blobs = []
    for name in ("a", "b"):
        d = tmp_path / name
        recs = harness.sweep_1d(small_agent, "cartpole", Site.DYNAMICS,
                                Kind.WHITE_NOISE, [0.0, 1.0], n=2, seed=0)
        harness.persist(recs, str(d), conf)
        blobs.append(tuple((d / f).read_bytes()
                           for f in ("results.csv", "episodes.csv", "manifest.txt")))
    assert blobs[0] == blobs[1]


def test_load_rejects_unknown_schema(tmp_path):
    (tmp_path / "manifest.txt").write_text("schema = 99\n")
    with pytest.raises(UsageError):
        harness.load(str(tmp_path))


def test_load_rejects_bad_header(tmp_path):
    (tmp_path / "manifest.txt").write_text("schema = 1\n")
    (tmp_path / "results.csv").write_text("foo,bar\n1,2\n")
    (tmp_path / "episodes.csv").write_text("record,episode,episode_return,length,rmse\n")
    with pytest.raises(UsageError):
        harness.load(str(tmp_path))


def test_fingerprint_sensitivity():
    a = harness.fingerprint({"task": "cartpole", "seed": 0})
    b = harness.fingerprint({"task": "cartpole", "seed": 0})
    c = harness.fingerprint({"task": "cartpole", "seed": 1})
    assert a == b and a != c and len(a) == 16


def test_overrides_string_roundtrip():
    d = {"pole_mass": 0.15, "cart_mass": 2.0}
    assert harness.parse_overrides(harness.format_overrides(d)) == d
    assert harness.parse_overrides("") == {}
    assert harness.format_overrides({}) == ""


def test_heatmap_row_zero_matches_sweep():
    levels = [0.0, 0.3]
    hm = harness.heatmap("cartpole", "ppo", Site.OBSERVATION, [0.0, 0.1],
                         levels, seed=0, train_steps=1500, n=2)
    assert len(hm) == 4
    spec = DisturbanceSpec(site=Site.OBSERVATION, kind=Kind.WHITE_NOISE,
                           level=0.0, dim=4)
    agent, _, _ = harness.train("cartpole", "ppo", 0, 1500,
                                train_disturbance=spec)
    sweep = harness.sweep_1d(agent, "cartpole", Site.OBSERVATION,
                             Kind.WHITE_NOISE, levels, n=2, seed=0,
                             agent_label="ppo")
    row0 = [r for r in hm if r.train_level == 0.0]
    assert row0 == sweep


def test_ablate_grids_and_conditions():
    conds = {name for name, _, _ in harness._ablation_conditions("cartpole")}
    assert conds == {"default", "params_x1.5", "params_x8", "obs_act_noise",
                     "tap_force"}
    recs = harness.ablate("dr_range", train_steps=400, n=1)
    labels = {r.agent for r in recs}
    assert labels == {"ppo", "ppo_dr[default]", "ppo_dr[low]", "ppo_dr[mid]",
                      "ppo_dr[high]"}
    assert len(recs) == 5 * 5
    with pytest.raises(ConfigError):
        harness.ablate("nonexistent")


def test_ablate_variant_grids_without_training():
    # grid definitions are data, checkable with no training at all
    assert harness.DR_RANGE_GRID == ["default", "low", "mid", "high"]
    assert harness.ADVERSARY_SCALE_GRID == [0.01, 0.1, 0.5, 1.0]
    assert harness.CVAR_ALPHA_GRID == [0.1, 0.3, 0.5, 1.0]


def test_scaled_overrides():
    o = harness._scaled_overrides("cartpole", 1.5)
    assert o == {"pole_length": 0.75, "pole_mass": 0.15000000000000002,
                 "cart_mass": 1.5}
    assert "gravity" not in harness._scaled_overrides("cartpole", 8.0)
    q = harness._scaled_overrides("quadrotor", 2.0)
    assert set(q) == {"mass", "inertia_yy"}
    assert harness._scaled_overrides("cartpole", None) == {}


def test_curve_io(tmp_path):
    curves = [[(0, 0.5, 1.0), (1000, 0.7, 0.9)],
              [(0, 0.6, 1.1), (1000, 0.8, 0.8)]]
    rows = harness.aggregate_curves(curves)
    assert rows == [(0, pytest.approx(0.55), pytest.approx(0.05), 2),
                    (1000, pytest.approx(0.75), pytest.approx(0.05), 2)]
    path = str(tmp_path / "curve.csv")
    harness.write_curve(path, rows)
    with open(path, newline="") as f:
        parsed = list(csv.reader(f))
    assert parsed[0] == ["step", "mean_metric", "std_metric", "n_seeds"]
    assert float(parsed[1][1]) == rows[0][1]


def test_site_dim():
    assert harness.site_dim("cartpole", Site.OBSERVATION) == 4
    assert harness.site_dim("quadrotor", Site.ACTION) == 2
