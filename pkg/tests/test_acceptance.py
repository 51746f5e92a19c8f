"""Acceptance criteria, one test per criterion.

Each test appends a PASS/FAIL line to the session report printed at the end
of the run. The end-to-end criteria (7-10) share one ablation run whose
full-model checkpoint is reused for the behavioral and comparison checks.
Set SARINV_ACCEPTANCE_DIR to keep the run artifacts somewhere permanent.
"""

import os
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from oracles import ChainEnv, brute_metrics, check_box_shadow, fd_check, value_iteration
from sarinv import harness
from sarinv.agent import (DQNAgent, TrainConfig, greedy_policy, metrics_from_rollouts, random_policy,
                          read_reward_curve, td_target, train)
from sarinv.config import ExperimentConfig
from sarinv.environment import EnvConfig, SarViewEnv, reward_boundary
from sarinv.geometry import ViewAngles, projection_units, rotation_matrix, subdivide
from sarinv.metrics import count_outliers, mae, mape, medae, rmse
from sarinv.nn import DuelingNet, q_loss_grad
from sarinv.renderer import TARGET_TEXTURE, build_scene, primitive_mesh, render, sample_gamma
from sarinv.replay import PrioritizedReplay

# Settings for the end-to-end run. Everything not listed keeps its default
# (tank_like scene, 128x128 images, coarse actions, 20 steps, 500 episodes,
# 100 evaluation episodes).
E2E_OVERRIDES = [
    "agent.lr=1e-4",
    "agent.updates_per_step=4",
    "eval.baseline_episodes=20",
]


@contextmanager
def criterion(report, number, title):
    info = {"detail": ""}
    t0 = time.perf_counter()
    try:
        yield info
    except AssertionError as exc:
        msg = str(exc).splitlines()[0] if str(exc) else "assertion failed"
        line = f"[FAIL] {number}. {title}: {info['detail']} ({msg}) [{time.perf_counter() - t0:.1f}s]"
        report.append(line)
        print(line)
        raise
    line = f"[PASS] {number}. {title}: {info['detail']} [{time.perf_counter() - t0:.1f}s]"
    report.append(line)
    print(line)


# -- 1-6, 11: component properties ---------------------------------------------

def test_ac01_geometry(acceptance_report):
    with criterion(acceptance_report, 1, "geometry properties") as info:
        t0 = time.perf_counter()
        rng = np.random.default_rng(1)
        worst_orth = worst_det = 0.0
        for a, b in zip(rng.uniform(30, 75, 1000), rng.uniform(0, 360, 1000)):
            r = rotation_matrix(ViewAngles(a, b))
            worst_orth = max(worst_orth, np.abs(r.T @ r - np.eye(3)).max())
            worst_det = max(worst_det, abs(np.linalg.det(r) - 1))
        elapsed = time.perf_counter() - t0
        info["detail"] = f"max|R^T R - I|={worst_orth:.1e}, max|det-1|={worst_det:.1e}, {elapsed:.2f}s"
        assert worst_orth < 1e-9 and worst_det < 1e-9
        assert projection_units(100, 45.0) == 100
        assert elapsed < 1.0


def test_ac02_renderer(acceptance_report, tank_scene):
    with criterion(acceptance_report, 2, "renderer properties") as info:
        t0 = time.perf_counter()
        ang = ViewAngles(47.5, 123.0)
        a = render(tank_scene, ang).intensity
        assert np.array_equal(a, render(tank_scene, ang).intensity), "not deterministic"
        assert np.array_equal(a, render(tank_scene, ViewAngles(47.5, 123.0 + 360.0)).intensity), "not periodic"
        assert np.array_equal(render(tank_scene.scaled(2.0), ang).intensity, 2.0 * a), "not linear in texture"
        box = build_scene(subdivide(primitive_mesh("box", (1, 1, 1)), 0.1), seed=3)
        for alpha in (30, 45, 60, 75):
            check_box_shadow(box, alpha)
        elapsed = time.perf_counter() - t0
        info["detail"] = f"determinism, periodicity, linearity, box shadow at 4 angles, {elapsed:.1f}s"
        assert elapsed < 30


def test_ac03_gamma_sampler(acceptance_report):
    with criterion(acceptance_report, 3, "gamma sampler") as info:
        t0 = time.perf_counter()
        x = sample_gamma(TARGET_TEXTURE, 10**6, 0)
        elapsed = time.perf_counter() - t0
        k, th = TARGET_TEXTURE.shape, TARGET_TEXTURE.scale
        rel_mean = abs(x.mean() / (k * th) - 1)
        rel_var = abs(x.var() / (k * th * th) - 1)
        info["detail"] = f"mean {x.mean():.5f} (target {k * th:.5f}), rel var err {rel_var:.4f}, {elapsed:.2f}s"
        assert rel_mean < 0.01 and rel_var < 0.03 and elapsed < 5


def test_ac04_reward_suite(acceptance_report, small_scene, small_render):
    with criterion(acceptance_report, 4, "reward suite") as info:
        env = SarViewEnv(small_scene, small_render, EnvConfig(max_steps=20, mode="eval"), seed=11)
        rng = np.random.default_rng(11)
        worst = 0.0
        for _ in range(1000):
            env.reset()
            total, done = 0.0, False
            while not done:
                res = env.step(int(rng.integers(25)))
                total += res.info["R_base"]
                done = res.done
            first, last = env.trace[0], env.trace[-1]
            expect = (first["err_alpha"] - last["err_alpha"]) + (first["err_beta"] - last["err_beta"])
            worst = max(worst, abs(total - expect))
        env = SarViewEnv(small_scene, small_render, EnvConfig(max_steps=40), seed=12)
        steps = 0
        while steps < 10_000:
            env.reset()
            done = False
            while not done and steps < 10_000:
                res = env.step(int(rng.integers(1, 25)))
                i = res.info
                assert 0 < i["R1"] <= 2 and i["R2"] in (0, 5, 10, 15) and i["R3"] in (-10, 0)
                assert 30 <= env.alpha <= 75 and 0 <= env.beta < 360
                done, steps = res.done, steps + 1
        assert all(30 <= reward_boundary(a)[1] <= 75 for a in np.linspace(0, 120, 241))
        env.reset(truth=(50, 0), init=(74, 0))
        res = env.step(1)
        assert env.alpha == 75 and res.info["R3"] == -10, "boundary clamp"
        info["detail"] = f"telescoping max error {worst:.1e} over 1000 episodes, {steps} fuzz steps in range"
        assert worst < 1e-9


def test_ac05_agent_numerics(acceptance_report):
    with criterion(acceptance_report, 5, "agent numerics") as info:
        worst_fd = 0.0
        for k in range(100):
            rng = np.random.default_rng(k)
            net = DuelingNet((6, 4), n_actions=3, seed=k)
            x, a = rng.normal(size=(5, 6)), rng.integers(3, size=5)
            y, w = rng.normal(size=5), rng.uniform(0.1, 1, 5)
            _, _, g = q_loss_grad(net, x, a, y, w)
            worst_fd = max(worst_fd, fd_check(lambda: q_loss_grad(net, x, a, y, w)[0], net.params, g))

        net = DuelingNet((551, 64), 25, seed=1)
        s = np.random.default_rng(0).normal(size=(32, 551))
        q = net.forward(s)
        net.params[-1] += 7.75
        shift = np.abs(net.forward(s) - q).max()

        rng = np.random.default_rng(2)
        online, target = DuelingNet((551, 32), 25, seed=3), DuelingNet((551, 32), 25, seed=4)
        batch = {"next_states": rng.normal(size=(128, 551)), "rewards": rng.normal(size=128),
                 "dones": rng.random(128) < 0.3}
        y = td_target(batch, online, target, 0.96)
        q_on, q_tg = online.forward(batch["next_states"]), target.forward(batch["next_states"])
        brute = [batch["rewards"][i] + (0 if batch["dones"][i] else
                 0.96 * q_tg[i, max(range(25), key=lambda j: (q_on[i, j], -j))]) for i in range(128)]
        double_q_exact = bool(np.array_equal(y, brute))

        buf = PrioritizedReplay(capacity=1000, state_dim=1)
        z = np.zeros(1)
        worst_tree = 0.0
        for op in range(100_000):
            if rng.random() < 0.5 or len(buf) == 0:
                buf.push(z, 0, 0.0, z, False)
            else:
                buf.update(rng.integers(len(buf), size=int(rng.integers(1, 5))), rng.exponential(10.0, 1))
            if op % 1000 == 999:
                leaves = buf.tree.leaves
                worst_tree = max(worst_tree, abs(buf.tree.total - leaves.sum()) / leaves.sum())
        info["detail"] = (f"FD rel err {worst_fd:.1e}, dueling shift {shift:.1e}, double-Q exact {double_q_exact}, "
                          f"sum-tree rel err {worst_tree:.1e}")
        assert worst_fd < 1e-4 and shift < 1e-12 and double_q_exact and worst_tree < 1e-6


def test_ac06_tabular_sanity(acceptance_report):
    with criterion(acceptance_report, 6, "tabular chain MDP") as info:
        t0 = time.perf_counter()
        env = ChainEnv()
        cfg = TrainConfig(episodes=200, batch_size=64, lr=1e-3, hidden=(64, 64), target_sync=50,
                          updates_per_step=4, seed=0)
        agent, _ = train(lambda: env, cfg)
        q_star = value_iteration(env, cfg.gamma)
        match = 0
        for e, qs in q_star.items():
            env.e = e
            match += qs[agent.act(env._obs())] >= max(qs) - 1e-9
        frac = match / len(q_star)
        elapsed = time.perf_counter() - t0
        info["detail"] = f"greedy policy optimal on {match}/{len(q_star)} states ({frac:.1%}), {elapsed:.1f}s"
        assert frac >= 0.95 and elapsed < 60


def test_ac11_metrics_oracle(acceptance_report):
    with criterion(acceptance_report, 11, "metrics oracle") as info:
        rng = np.random.default_rng(3)
        worst = 0.0
        for k in range(1000):
            n = int(rng.integers(1, 60))
            circ = bool(k % 2)
            t, p = rng.uniform(0, 360, n), rng.uniform(0, 360, n)
            ref = brute_metrics(p.tolist(), t.tolist(), circ)
            for name, fn in (("mae", mae), ("mape", mape), ("rmse", rmse), ("medae", medae)):
                worst = max(worst, abs(fn(p, t, circ) - ref[name]) / max(1.0, abs(ref[name])))
        info["detail"] = f"max deviation {worst:.1e}; outliers of (49, 50, 51) = {count_outliers([49, 50, 51])}"
        assert worst <= 1e-12 and count_outliers([49, 50, 51]) == 1


# -- 7-10: end-to-end runs ----------------------------------------------------

@pytest.fixture(scope="session")
def e2e_root(tmp_path_factory):
    root = os.environ.get("SARINV_ACCEPTANCE_DIR")
    path = Path(root) if root else tmp_path_factory.mktemp("acceptance")
    path.mkdir(parents=True, exist_ok=True)
    return path


@pytest.fixture(scope="session")
def e2e_cfg(e2e_root):
    return ExperimentConfig().override(E2E_OVERRIDES + [f"out_dir={e2e_root}"]).validate()


@pytest.fixture(scope="session")
def e2e_lab(e2e_cfg):
    return harness.Lab.build(e2e_cfg)


@pytest.fixture(scope="session")
def ablation(e2e_cfg, e2e_lab, e2e_root):
    cfg = e2e_cfg.override([f"out_dir={e2e_root / 'ablation'}"])
    t0 = time.perf_counter()
    rows = harness.run_ablation(cfg, e2e_lab)
    full = next(r for r in rows if r["table"] == "reward" and r["variant"] == "full")
    return {"rows": rows, "checkpoint": Path(full["checkpoint"]), "seconds": time.perf_counter() - t0}


def test_ac07_end_to_end(acceptance_report, ablation, e2e_cfg, e2e_lab):
    with criterion(acceptance_report, 7, "end-to-end DRL vs random") as info:
        episodes = harness.shared_episodes(e2e_lab, e2e_cfg["eval.episodes"])
        agent = DQNAgent.from_checkpoint(ablation["checkpoint"])
        drl = metrics_from_rollouts(harness._rollouts(e2e_lab, greedy_policy(agent), episodes))
        rnd = metrics_from_rollouts(harness._rollouts(e2e_lab, random_policy(e2e_cfg["eval.seed"]), episodes))
        curve = read_reward_curve(ablation["checkpoint"].parent / "reward_curve.csv")
        gain = 1 - drl.MAE_mean / rnd.MAE_mean
        info["detail"] = (f"DRL MAE_mean {drl.MAE_mean:.2f} (alpha {drl.MAE_alpha:.2f}, beta {drl.MAE_beta:.2f}), "
                          f"random {rnd.MAE_mean:.2f}, improvement {gain:.1%}, n={drl.n}, "
                          f"{len(curve)} training episodes")
        assert len(curve) == 500 and drl.n == 100
        assert drl.MAE_mean <= 6.0, f"MAE_mean {drl.MAE_mean:.2f} > 6"
        assert gain >= 0.5, f"improvement over random {gain:.1%} < 50%"


def test_ac08_behavioral(acceptance_report, ablation, e2e_cfg, e2e_lab, e2e_root):
    with criterion(acceptance_report, 8, "behavioral reproductions") as info:
        cfg = e2e_cfg.override([f"out_dir={e2e_root / 'behavioral'}"])
        steps, phases = harness.run_behavioral(cfg, ablation["checkpoint"], e2e_lab)
        curve = [r["cum_reward"] for r in read_reward_curve(e2e_root / "behavioral" / "reward_curve.csv")]
        head, tail = float(np.mean(curve[:50])), float(np.mean(curve[-100:]))
        med = {k: steps[k]["median_error"] for k in (1, 5, 15)}
        freq = {(r["phase"], r["level"]): r["frequency"] for r in phases}
        early, late = freq[("early", 1)], freq[("late", 1)]
        info["detail"] = (f"reward first-50 {head:.1f} vs last-100 {tail:.1f}; median error at steps 1/5/15 = "
                          f"{med[1]:.1f}/{med[5]:.1f}/{med[15]:.1f}; level-1 share early {early:.2f} late {late:.2f}")
        assert tail > head, "reward curve did not rise"
        assert med[1] >= med[5] >= med[15], "median error increases with steps"
        assert early > late, "large actions not front-loaded"


def test_ac09_baseline_ordering(acceptance_report, ablation, e2e_cfg, e2e_lab, e2e_root):
    with criterion(acceptance_report, 9, "baseline ordering") as info:
        cfg = e2e_cfg.override([f"out_dir={e2e_root / 'comparison'}", f"checkpoint={ablation['checkpoint']}"])
        rows = {r["method"]: r for r in harness.run_comparison(cfg, e2e_lab)}
        hybrid, drl = rows["DL+DRL"], rows["DRL"]
        ratio_ga = rows["GA"]["runtime_s"] / hybrid["runtime_s"]
        ratio_pso = rows["PSO"]["runtime_s"] / hybrid["runtime_s"]
        info["detail"] = (f"MAE_mean DL+DRL {hybrid['MAE_mean']:.2f} vs DRL {drl['MAE_mean']:.2f}; "
                          f"GA {ratio_ga:.0f}x and PSO {ratio_pso:.0f}x the DL+DRL time "
                          f"(GA/PSO over {rows['GA']['n']} episodes)")
        assert hybrid["MAE_mean"] <= drl["MAE_mean"]
        assert ratio_ga >= 10 and ratio_pso >= 10


def test_ac10_ablation(acceptance_report, ablation):
    with criterion(acceptance_report, 10, "ablation protocol") as info:
        rows = ablation["rows"]
        full = next(r for r in rows if r["table"] == "reward" and r["variant"] == "full")
        summary = ", ".join(f"{r['variant']}={r['outliers']}" for r in rows)
        info["detail"] = f"outliers {summary}; one invocation, {ablation['seconds'] / 60:.0f} min"
        assert len(rows) == 7
        assert [r["table"] for r in rows].count("state") == 3 and [r["table"] for r in rows].count("reward") == 4
        worse = [r["variant"] for r in rows if r["outliers"] < full["outliers"]]
        assert not worse, f"variants with fewer outliers than the full model: {worse}"
