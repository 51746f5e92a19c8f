import filecmp

import numpy as np
import pytest

from sarinv import harness
from sarinv.agent import Rollout, read_reward_curve
from sarinv.cli import main
from sarinv.config import DEFAULTS, ConfigError, ExperimentConfig
from sarinv.fileio import read_meta, read_pgm
from sarinv.metrics import METRIC_COLUMNS, read_table

TINY = ["scene.kind=box", "render.image_size=32", "render.samples_per_facet=4", "env.normalizer_samples=8",
        "env.max_steps=3", "agent.episodes=3", "agent.batch_size=8", "eval.episodes=3", "behavioral.episodes=4",
        "dl.epochs=3", "ga.population=4", "ga.generations=2", "pso.particles=4", "pso.iterations=2"]


def tiny(tmp_path, *extra):
    return ExperimentConfig().override(TINY + [f"out_dir={tmp_path}"] + list(extra))


# -- config ----------------------------------------------------------------------

def test_config_round_trip(tmp_path):
    cfg = ExperimentConfig().override(["agent.lr=3e-4", "env.use_fd=false", "scene.kind=box"])
    cfg.save(tmp_path / "c.txt")
    back = ExperimentConfig.load(tmp_path / "c.txt")
    assert back == cfg
    assert back["agent.lr"] == 3e-4 and back["env.use_fd"] is False
    assert set(back.values) == set(DEFAULTS)


def test_config_rejects_unknown_and_bad_values(tmp_path):
    with pytest.raises(ConfigError, match="nope.key"):
        ExperimentConfig().override(["nope.key=1"])
    with pytest.raises(ConfigError):
        ExperimentConfig().override(["agent.episodes=many"])
    with pytest.raises(ConfigError):
        ExperimentConfig().override(["env.actions=medium"]).validate()
    with pytest.raises(ConfigError):
        ExperimentConfig().override(["agent.lr=-1"]).validate()
    (tmp_path / "bad.txt").write_text("# comment\nagent.lr=1e-3\nmystery=4\n")
    with pytest.raises(ConfigError, match="mystery"):
        ExperimentConfig.load(tmp_path / "bad.txt")


def test_typed_views():
    cfg = ExperimentConfig().override(["agent.updates_per_step=4", "env.actions=fine", "ga.population=12"])
    assert cfg.train_config().updates_per_step == 4
    assert cfg.env_config().actions == "fine"
    assert cfg.env_config(mode="eval").mode == "eval"
    assert cfg.ga_config().population == 12
    assert cfg.train_config().lr == 1e-5 and cfg.train_config().gamma == 0.96


# -- datasets --------------------------------------------------------------------

def test_grid_and_distribution_specs():
    assert len(harness.grid_angles()) == 576
    np.testing.assert_array_equal(harness.distribution_support(), np.arange(35, 76, 5))
    assert len(harness.distribution_support()) == 9
    a, b = harness.distribution_angles(50, 7), harness.distribution_angles(50, 7)
    assert a == b
    assert all(al in range(35, 76, 5) and be % 5 == 0 and 0 <= be < 360 for al, be in a)


def test_gen_dataset_manifest(tmp_path):
    cfg = tiny(tmp_path, "dataset.kind=distribution", "dataset.n=5")
    rows = harness.gen_dataset(cfg, tmp_path / "ds")
    back = harness.read_manifest(tmp_path / "ds" / "manifest.csv")
    assert [(r["path"], r["alpha"], r["beta"]) for r in back] == [(r["path"], r["alpha"], r["beta"]) for r in rows]
    meta = read_meta(tmp_path / "ds" / "img_00000.meta")
    assert (meta["alpha"], meta["beta"]) == (rows[0]["alpha"], rows[0]["beta"])
    x, y = harness.manifest_features(tmp_path / "ds" / "manifest.csv")
    assert x.shape == (5, 274) and y.shape == (5, 2)
    harness.gen_dataset(cfg, tmp_path / "ds2")
    assert filecmp.cmp(tmp_path / "ds" / "manifest.csv", tmp_path / "ds2" / "manifest.csv", shallow=False)
    (tmp_path / "ds" / "img_00003.pgm").unlink()
    with pytest.raises(FileNotFoundError):
        harness.read_manifest(tmp_path / "ds" / "manifest.csv")


# -- behavioral helpers ----------------------------------------------------------

def _roll(errors, levels):
    return Rollout((0, 0), (0, 0), (0, 0), len(levels), 0.0, errors, list(range(len(levels))), levels)


def test_error_by_step_and_phases():
    rolls = [_roll([(10, 30), (5, 10), (1, 2)], [1, 3]), _roll([(4, 4), (2, 2), (1, 1), (1, 1)], [2, 3, 0])]
    err = harness.error_by_step(rolls, 4)
    np.testing.assert_allclose(err[0], [20, 7.5, 1.5, 1.5, 1.5])
    np.testing.assert_allclose(err[1], [4, 2, 1, 1, 1])
    norm = err / err[:, :1]
    assert np.all(norm[:, 0] == 1)
    freq = harness.action_phase_frequencies(rolls)
    for ph in ("early", "late"):
        assert abs(freq[ph].sum() - 1) < 1e-9
    # early halves: [1] and [2, 3]; late halves: [3] and [0]
    np.testing.assert_allclose(freq["early"], [0, 1 / 3, 1 / 3, 1 / 3])
    np.testing.assert_allclose(freq["late"], [0.5, 0, 0, 0.5])


# -- end-to-end runs at toy scale ------------------------------------------------

def test_train_resolved_config_reproduces(tmp_path):
    cfg = tiny(tmp_path / "a")
    harness.run_train(cfg)
    again = ExperimentConfig.load(tmp_path / "a" / "resolved_config.txt").override([f"out_dir={tmp_path / 'b'}"])
    harness.run_train(again)
    for name in ("agent.ckpt", "reward_curve.csv"):
        assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name, shallow=False)
    assert len(read_reward_curve(tmp_path / "a" / "reward_curve.csv")) == 3


def test_ablation_rows(tmp_path):
    rows = harness.run_ablation(tiny(tmp_path))
    assert [r["table"] for r in rows] == ["state"] * 3 + ["reward"] * 4
    assert rows[2]["checkpoint"] == rows[6]["checkpoint"]  # full variant trained once
    trained = sorted(p.name for p in tmp_path.iterdir() if (p / "agent.ckpt").exists())
    assert len(trained) == 6
    back = read_table(tmp_path / "ablation.csv")
    assert len(back) == 7 and back[0]["variant"] == "no SD, no FD"


def test_comparison_and_behavioral(tmp_path):
    cfg = tiny(tmp_path, "eval.baseline_episodes=2")
    rows = harness.run_comparison(cfg)
    assert [r["method"] for r in rows] == harness.COMPARISON_METHODS
    table = read_table(tmp_path / "comparison.csv")
    assert list(table[0]) == ["method"] + METRIC_COLUMNS
    assert all(r["runtime_s"] > 0 for r in table)
    assert table[0]["n"] == 2 and table[2]["n"] == 3
    steps, phases = harness.run_behavioral(cfg, checkpoint=tmp_path / "agent" / "agent.ckpt")
    assert steps[0]["norm_error"] == 1.0 and len(steps) == 4
    assert (tmp_path / "reward_curve.csv").exists()
    for ph in ("early", "late"):
        total = sum(r["frequency"] for r in phases if r["phase"] == ph)
        assert total == pytest.approx(1.0) or total == 0


# -- CLI -------------------------------------------------------------------------

def test_cli_render(tmp_path):
    assert main(["render", "--alpha", "45", "--beta", "120", "--out", str(tmp_path / "img.pgm")] +
                [a for kv in TINY[:3] for a in ("--set", kv)]) == 0
    assert read_pgm(tmp_path / "img.pgm").shape == (32, 32)
    assert read_meta(tmp_path / "img.meta")["beta"] == 120


def test_cli_unknown_key_exit_code(tmp_path, capsys):
    assert main(["eval", "--set", "agent.flux=3"]) == 2
    assert "agent.flux" in capsys.readouterr().err
    assert main(["bogus"]) == 2
    assert main(["eval", "--config", str(tmp_path / "missing.txt")]) == 2


def test_cli_runtime_error_exit_code(tmp_path):
    args = ["eval", "--set", f"out_dir={tmp_path}", "--set", f"checkpoint={tmp_path / 'none.ckpt'}"]
    for kv in TINY:
        args += ["--set", kv]
    assert main(args) == 1


def test_cli_dataset_grid(tmp_path):
    args = ["dataset", "--grid", "--out", str(tmp_path / "ds")]
    for kv in TINY[:3]:
        args += ["--set", kv]
    assert main(args) == 0
    assert len(harness.read_manifest(tmp_path / "ds" / "manifest.csv")) == 576
    assert (tmp_path / "ds" / "seeds.txt").exists() and (tmp_path / "ds" / "resolved_config.txt").exists()


def test_cli_config_file_and_baseline(tmp_path):
    cfg = tiny(tmp_path)
    cfg.save(tmp_path / "exp.txt")
    assert main(["baseline", "--config", str(tmp_path / "exp.txt"), "--method", "Random"]) == 0
    row = read_table(tmp_path / "random_metrics.csv")[0]
    assert row["method"] == "Random" and row["n"] == 3
