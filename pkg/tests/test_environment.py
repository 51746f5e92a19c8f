import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sarinv.environment import (FEATURE_DIM, STATE_DIM, EnvConfig, EpisodeError, RewardParams, SarViewEnv,
                                action_table, r1, read_trace, reward_base, reward_bonus, reward_boundary,
                                reward_exp)
from sarinv.features import extract
from sarinv.geometry import ViewAngles
from sarinv.renderer import render


def test_coarse_table():
    t = action_table("coarse")
    assert len(t) == 25
    pairs = [tuple(d) for d in t.deltas]
    assert pairs[0] == (0, 0) and pairs.count((0, 0)) == 1
    assert len(set(pairs)) == 25
    assert (8, -30) in pairs and (0, 2) in pairs
    assert sorted(set(np.abs(t.deltas[:, 0]))) == [0, 1, 3, 8]
    assert sorted(set(np.abs(t.deltas[:, 1]))) == [0, 2, 10, 30]
    assert t.levels[0] == 0 and sorted(set(t.levels[1:])) == [1, 2, 3]


def test_fine_table():
    t = action_table("fine")
    assert len(t) == 25
    assert sorted(set(np.abs(t.deltas[:, 0]))) == [0, 0.5, 1, 2]
    assert sorted(set(np.abs(t.deltas[:, 1]))) == [0, 1, 2, 5]
    with pytest.raises(ValueError):
        action_table("medium")


def test_r1_examples():
    assert r1(40, 40) == 0
    assert r1(50, 40) == -10
    assert r1(359, 1, circular=True) == pytest.approx(-2)


def test_reward_base_examples():
    assert reward_base(-7, -10, -3, -3) == 3
    assert reward_base(-5, -5, -2, -2) == 0


def test_reward_exp_examples():
    assert reward_exp(0, 0) == 2
    assert reward_exp(10, 0) - 1 == pytest.approx(0.60653, abs=1e-5)
    assert reward_exp(0, 10) - 1 == pytest.approx(0.13534, abs=1e-5)


@given(st.floats(0, 500), st.floats(0, 500), st.floats(0.01, 100))
def test_reward_exp_decreasing(ea, eb, d):
    assert reward_exp(ea + d, eb) < reward_exp(ea, eb) or reward_exp(ea, eb) - reward_exp(ea + d, eb) == 0 and ea > 600
    assert reward_exp(ea, eb + d) <= reward_exp(ea, eb)
    assert 0 < reward_exp(ea, eb) <= 2


def test_reward_exp_literal_sign_switch():
    p = RewardParams(literal_exp_sign=True)
    assert reward_exp(10, 0, p) == pytest.approx(math.exp(0.5) + 1)


def test_reward_bonus_examples():
    assert reward_bonus(20, 20, 0, 0) == 0
    assert reward_bonus(1, 1, 20, 100) == 15
    assert reward_bonus(4, 8, 6, 20) == 5
    # alpha satisfies tier 2 but beta only tier 1: product per tier
    assert reward_bonus(2, 8, 12, 20) == 5


@given(st.floats(0, 200), st.floats(0, 200), st.floats(0, 200), st.floats(0, 200))
def test_reward_bonus_values(ea, eb, ia, ib):
    assert reward_bonus(ea, eb, ia, ib) in (0, 5, 10, 15)


def test_reward_params_validate_tier_order():
    with pytest.raises(ValueError):
        RewardParams(alpha_tiers=((3, 5), (5, 10), (1.5, 15)))
    with pytest.raises(ValueError):
        RewardParams(beta_tiers=((10, 30), (5, 15), (2, 60)))


@pytest.mark.parametrize("a,expected", [(50, (0, 50)), (76, (-10, 75)), (29.5, (-10, 30))])
def test_reward_boundary(a, expected):
    assert reward_boundary(a) == expected


@pytest.fixture
def env(small_scene, small_render):
    return SarViewEnv(small_scene, small_render, EnvConfig(max_steps=10), seed=0)


def test_reset_state_contract(env, small_scene, small_render):
    s = env.reset(seed=1)
    assert s.shape == (STATE_DIM,)
    assert not s[:FEATURE_DIM].any()
    f_cur = extract(render(small_scene, ViewAngles(env.alpha, env.beta), small_render))
    f_in = extract(render(small_scene, ViewAngles(*env.truth), small_render))
    np.testing.assert_allclose(s[FEATURE_DIM:2 * FEATURE_DIM], f_cur - f_in)
    b = math.radians(env.beta)
    np.testing.assert_allclose(s[-3:], [(env.alpha - 52.5) / 22.5, math.sin(b), math.cos(b)])
    assert 30 <= env.alpha <= 75 and 0 <= env.beta < 360


def test_reset_at_truth_has_zero_semantic_block(env):
    s = env.reset(truth=(40, 200), init=(40, 200))
    assert not s[FEATURE_DIM:2 * FEATURE_DIM].any()


def test_terminal_action(env):
    env.reset(seed=2)
    before = env.estimate()
    res = env.step(0)
    assert res.done and res.info["terminated"]
    assert env.estimate() == before
    with pytest.raises(EpisodeError):
        env.step(1)


def test_step_budget(env):
    env.reset(truth=(50, 0), init=(50, 180))
    for t in range(10):
        res = env.step(24)  # (0, -2): never reaches the truth in 10 steps
    assert res.done and res.info["truncated"] and not res.info["terminated"]
    assert env.t == 10


def test_train_mode_success_termination(small_scene, small_render):
    table = action_table("coarse")
    a = [tuple(d) for d in table.deltas].index((1, 2))
    for mode, expect in (("train", True), ("eval", False)):
        env = SarViewEnv(small_scene, small_render, EnvConfig(mode=mode))
        env.reset(truth=(50, 100), init=(48, 95.5))
        res = env.step(a)
        assert (res.info["err_alpha"], res.info["err_beta"]) == pytest.approx((1, 2.5))
        assert res.done is expect


def test_invalid_action(env):
    env.reset(seed=0)
    with pytest.raises(ValueError):
        env.step(25)


def test_boundary_clamp_and_penalty(env):
    env.reset(truth=(50, 0), init=(74, 0))
    res = env.step(1)  # (+8, +30)
    assert env.alpha == 75 and res.info["R3"] == -10


def test_fuzz_reward_ranges_and_bounds(small_scene, small_render):
    env = SarViewEnv(small_scene, small_render, EnvConfig(max_steps=40), seed=3)
    rng = np.random.default_rng(3)
    steps = 0
    while steps < 10_000:
        env.reset()
        done = False
        while not done:
            res = env.step(int(rng.integers(1, 25)) if rng.random() > 0.02 else 0)
            info = res.info
            assert 0 < info["R1"] <= 2
            assert info["R2"] in (0, 5, 10, 15)
            assert info["R3"] in (-10, 0)
            assert 30 <= env.alpha <= 75 and 0 <= env.beta < 360
            assert res.reward == pytest.approx(info["R_base"] + info["R1"] + info["R2"] + info["R3"])
            done = res.done
            steps += 1


def test_telescoping_over_random_episodes(small_scene, small_render):
    env = SarViewEnv(small_scene, small_render, EnvConfig(max_steps=20, mode="eval"), seed=4)
    rng = np.random.default_rng(4)
    for _ in range(1000):
        env.reset()
        done = False
        total = 0.0
        while not done:
            res = env.step(int(rng.integers(25)))
            total += res.info["R_base"]
            done = res.done
        first, last = env.trace[0], env.trace[-1]
        expect = (first["err_alpha"] - last["err_alpha"]) + (first["err_beta"] - last["err_beta"])
        assert abs(total - expect) < 1e-9


def test_temporal_block_and_action_closure(small_scene, small_render, tmp_path):
    env = SarViewEnv(small_scene, small_render, EnvConfig(max_steps=8, mode="eval"), seed=5)
    env.reset()
    rng = np.random.default_rng(5)
    prev = (env.alpha, env.beta)
    deltas = {tuple(d) for d in env.table.deltas}
    for _ in range(8):
        res = env.step(int(rng.integers(1, 25)))
        f_now = extract(render(small_scene, ViewAngles(env.alpha, env.beta), small_render))
        f_prev = extract(render(small_scene, ViewAngles(*prev), small_render))
        np.testing.assert_allclose(res.state[:FEATURE_DIM], f_now - f_prev)
        assert (env.trace[-1]["action_dx"], env.trace[-1]["action_dy"]) in deltas
        prev = (env.alpha, env.beta)
        if res.done:
            break
    env.export_trace(tmp_path / "trace.csv")
    back = read_trace(tmp_path / "trace.csv")
    assert len(back) == len(env.trace)
    for a, b in zip(back, env.trace):
        for k, v in b.items():
            assert a[k] == v


def test_ablation_switches_zero_blocks(small_scene, small_render):
    env = SarViewEnv(small_scene, small_render, EnvConfig(use_sd=False, use_fd=False, use_r1=False,
                                                          use_r2=False, use_r3=False), seed=6)
    env.reset()
    for a in (1, 2, 3):
        res = env.step(a)
        assert not res.state[:2 * FEATURE_DIM].any()
        assert res.info["R1"] == res.info["R2"] == res.info["R3"] == 0
        assert res.reward == res.info["R_base"]


def test_external_image_without_truth(small_scene, small_render):
    env = SarViewEnv(small_scene, small_render, EnvConfig(max_steps=3))
    img = render(small_scene, ViewAngles(45, 45), small_render)
    s = env.reset(input_image=img, init=(45, 45), seed=1)
    assert not s[FEATURE_DIM:2 * FEATURE_DIM].any()
    res = env.step(5)
    assert res.reward == 0 and math.isnan(res.info["err_alpha"])
