"""View-angle inversion as a Markov decision process.

The agent moves an angle estimate with discrete increments. Each move is
re-rendered and the state is built from feature differences between the
new render, the previous render and the input image, plus the encoded
current angles.
"""

from __future__ import annotations

import csv
import math
from collections import OrderedDict
from dataclasses import dataclass, field, replace

import numpy as np

from .features import FEATURE_DIM, extract, normalize
from .geometry import ViewAngles, angular_error, wrap_azimuth
from .renderer import RenderConfig, Scene, render

STATE_DIM = 2 * FEATURE_DIM + 3
N_ACTIONS = 25

# (d_alpha, d_beta) magnitude per level, largest first
ACTION_LEVELS = {
    "coarse": ((8.0, 30.0), (3.0, 10.0), (1.0, 2.0)),
    "fine": ((2.0, 5.0), (1.0, 2.0), (0.5, 1.0)),
}

TRACE_COLUMNS = ["t", "alpha", "beta", "action_dx", "action_dy", "R_base", "R1", "R2", "R3",
                 "R_t", "err_alpha", "err_beta", "done"]


class EpisodeError(RuntimeError):
    """Step requested on an episode that has not started or already ended."""


@dataclass(frozen=True)
class ActionTable:
    deltas: np.ndarray      # (25, 2) rows of (d_alpha, d_beta)
    levels: np.ndarray      # magnitude level 1..3 per action, 0 for the terminal action
    mode: str

    def __len__(self):
        return len(self.deltas)

    def __getitem__(self, i):
        return tuple(self.deltas[i])


def action_table(mode: str = "coarse") -> ActionTable:
    """Terminal action (0, 0) at index 0, then 8 moves per magnitude level."""
    if mode not in ACTION_LEVELS:
        raise ValueError(f"unknown action mode {mode!r}")
    deltas, levels = [(0.0, 0.0)], [0]
    for lvl, (da, db) in enumerate(ACTION_LEVELS[mode], 1):
        for x in (da, -da, 0.0):
            for y in (db, -db, 0.0):
                if x == 0.0 and y == 0.0:
                    continue
                deltas.append((x, y))
                levels.append(lvl)
    return ActionTable(np.array(deltas), np.array(levels), mode)


@dataclass(frozen=True)
class RewardParams:
    eta_alpha: float = -0.05
    eta_beta: float = -0.2
    alpha_tiers: tuple = ((5.0, 5.0), (3.0, 10.0), (1.5, 15.0))
    beta_tiers: tuple = ((10.0, 15.0), (5.0, 30.0), (2.0, 60.0))
    boundary_penalty: float = -10.0
    bonus: float = 5.0
    literal_exp_sign: bool = False   # exp(eta * r1) with r1 <= 0, i.e. growing with error

    def __post_init__(self):
        for tiers in (self.alpha_tiers, self.beta_tiers):
            prox = [p for p, _ in tiers]
            imp = [q for _, q in tiers]
            if not (all(a > b for a, b in zip(prox, prox[1:])) and prox[-1] > 0):
                raise ValueError("tier proximity thresholds must decrease and stay positive")
            if not all(a < b for a, b in zip(imp, imp[1:])):
                raise ValueError("tier improvement thresholds must increase")


def r1(theta_t: float, theta_ref: float, circular: bool = False) -> float:
    return -angular_error(theta_t, theta_ref, circular)


def reward_base(r1_now_alpha, r1_prev_alpha, r1_now_beta, r1_prev_beta) -> float:
    return (r1_now_alpha - r1_prev_alpha) + (r1_now_beta - r1_prev_beta)


def reward_exp(err_alpha: float, err_beta: float, params: RewardParams = RewardParams()) -> float:
    if params.literal_exp_sign:
        return math.exp(params.eta_alpha * -err_alpha) + math.exp(params.eta_beta * -err_beta)
    return math.exp(params.eta_alpha * err_alpha) + math.exp(params.eta_beta * err_beta)


def _tier(err, improve, proximity, needed) -> int:
    return int(err < proximity and improve > needed)


def reward_bonus(err_alpha, err_beta, improve_alpha, improve_beta,
                 params: RewardParams = RewardParams()) -> float:
    total = 0
    for (rho, phi), (nu, om) in zip(params.alpha_tiers, params.beta_tiers):
        total += _tier(err_alpha, improve_alpha, rho, phi) * _tier(err_beta, improve_beta, nu, om)
    return params.bonus * total


def reward_boundary(proposed_alpha: float, bounds=(30.0, 75.0), penalty: float = -10.0):
    lo, hi = bounds
    if proposed_alpha < lo:
        return penalty, lo
    if proposed_alpha > hi:
        return penalty, hi
    return 0.0, proposed_alpha


@dataclass(frozen=True)
class EnvConfig:
    max_steps: int = 20
    alpha_bounds: tuple = (30.0, 75.0)
    mode: str = "train"                   # "train" enables the success termination
    actions: str = "coarse"
    rewards: RewardParams = field(default_factory=RewardParams)
    use_sd: bool = True                   # temporal (sequential) difference block
    use_fd: bool = True                   # feature difference against the input
    use_r1: bool = True
    use_r2: bool = True
    use_r3: bool = True
    circular_beta: bool = True
    success_threshold: float = 2.0
    cache_size: int = 4096

    def with_(self, **kw) -> "EnvConfig":
        return replace(self, **kw)


@dataclass
class StepResult:
    state: np.ndarray
    reward: float
    done: bool
    info: dict


class SarViewEnv:
    """Single-threaded episode state around a fixed scene."""

    def __init__(self, scene: Scene, render_config: RenderConfig = RenderConfig(),
                 config: EnvConfig = EnvConfig(), normalizer=None, seed=None):
        if config.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        self.scene = scene
        self.render_config = render_config
        self.config = config
        self.normalizer = normalizer
        self.table = action_table(config.actions)
        self.rng = np.random.default_rng(seed)
        self._cache: OrderedDict = OrderedDict()
        self.done = True
        self.t = 0
        self.trace: list[dict] = []

    # -- features
    def features_of_image(self, image) -> np.ndarray:
        f = extract(image)
        return normalize(f, self.normalizer) if self.normalizer is not None else f

    def features_at(self, alpha: float, beta: float) -> np.ndarray:
        key = (alpha, beta)
        f = self._cache.get(key)
        if f is None:
            f = self.features_of_image(render(self.scene, ViewAngles(alpha, beta), self.render_config))
            self._cache[key] = f
            if len(self._cache) > self.config.cache_size:
                self._cache.popitem(last=False)
        else:
            self._cache.move_to_end(key)
        return f

    def sample_angles(self, rng=None) -> tuple[float, float]:
        rng = self.rng if rng is None else rng
        lo, hi = self.config.alpha_bounds
        return float(rng.uniform(lo, hi)), float(rng.uniform(0.0, 360.0))

    # -- lifecycle
    def reset(self, seed=None, truth=None, init=None, input_image=None) -> np.ndarray:
        """Start an episode.

        ``truth`` defaults to a random draw unless ``input_image`` is given,
        in which case the truth may stay unknown (rewards are then zero).
        ``init`` overrides the random initial estimate.
        """
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        if truth is None and input_image is None:
            truth = self.sample_angles()
        self.truth = None if truth is None else (float(truth[0]), wrap_azimuth(truth[1]))
        if input_image is not None:
            self.input_features = self.features_of_image(input_image)
        else:
            self.input_features = self.features_at(*self.truth)
        if init is None:
            init = self.sample_angles()
        lo, hi = self.config.alpha_bounds
        self.alpha = float(min(max(init[0], lo), hi))
        self.beta = wrap_azimuth(init[1])
        self.init = (self.alpha, self.beta)
        self.cur_features = self.features_at(self.alpha, self.beta)
        self.t = 0
        self.done = False
        self.err0 = self._errors()
        self.err = self.err0
        state = self._state(np.zeros(FEATURE_DIM))
        self.trace = [self._row(0.0, 0.0, {"R_base": 0.0, "R1": 0.0, "R2": 0.0, "R3": 0.0, "R_t": 0.0})]
        return state

    def _errors(self):
        if self.truth is None:
            return (math.nan, math.nan)
        return (angular_error(self.alpha, self.truth[0]),
                angular_error(self.beta, self.truth[1], self.config.circular_beta))

    def _state(self, temporal: np.ndarray) -> np.ndarray:
        cfg = self.config
        lo, hi = cfg.alpha_bounds
        mid, half = (lo + hi) / 2, (hi - lo) / 2
        sd = temporal if cfg.use_sd else np.zeros(FEATURE_DIM)
        fd = self.cur_features - self.input_features if cfg.use_fd else np.zeros(FEATURE_DIM)
        b = math.radians(self.beta)
        return np.concatenate([sd, fd, [(self.alpha - mid) / half, math.sin(b), math.cos(b)]])

    def _row(self, dx, dy, rewards) -> dict:
        return {"t": self.t, "alpha": self.alpha, "beta": self.beta, "action_dx": dx, "action_dy": dy,
                **rewards, "err_alpha": self.err[0], "err_beta": self.err[1], "done": self.done}

    def step(self, action: int) -> StepResult:
        if self.done:
            raise EpisodeError("episode is finished; call reset()")
        action = int(action)
        if not 0 <= action < len(self.table):
            raise ValueError(f"action index {action} outside [0, {len(self.table)})")
        cfg, rp = self.config, self.config.rewards
        dx, dy = self.table[action]
        terminal = action == 0
        penalty = 0.0
        if not terminal:
            penalty, self.alpha = reward_boundary(self.alpha + dx, cfg.alpha_bounds, rp.boundary_penalty)
            self.beta = wrap_azimuth(self.beta + dy)
        prev_features = self.cur_features
        self.cur_features = self.features_at(self.alpha, self.beta)
        temporal = self.cur_features - prev_features

        prev_err, self.err = self.err, self._errors()
        comps = {"R_base": 0.0, "R1": 0.0, "R2": 0.0, "R3": 0.0}
        if self.truth is not None:
            comps["R_base"] = reward_base(-self.err[0], -prev_err[0], -self.err[1], -prev_err[1])
            if cfg.use_r1:
                comps["R1"] = reward_exp(self.err[0], self.err[1], rp)
            if cfg.use_r2:
                imp = (max(0.0, self.err0[0] - self.err[0]), max(0.0, self.err0[1] - self.err[1]))
                comps["R2"] = reward_bonus(self.err[0], self.err[1], imp[0], imp[1], rp)
            if cfg.use_r3:
                comps["R3"] = penalty
        reward = comps["R_base"] + comps["R1"] + comps["R2"] + comps["R3"]
        comps["R_t"] = reward

        self.t += 1
        success = (cfg.mode == "train" and self.truth is not None
                   and 0.5 * (self.err[0] + self.err[1]) < cfg.success_threshold)
        terminated = terminal or success
        truncated = not terminated and self.t >= cfg.max_steps
        self.done = terminated or truncated
        state = self._state(temporal)
        self.trace.append(self._row(dx, dy, comps))
        info = {"alpha": self.alpha, "beta": self.beta, "err_alpha": self.err[0], "err_beta": self.err[1],
                "terminated": terminated, "truncated": truncated, "action": action,
                "level": int(self.table.levels[action]), **comps}
        return StepResult(state, reward, self.done, info)

    def estimate(self) -> tuple[float, float]:
        return (self.alpha, self.beta)

    def export_trace(self, path) -> None:
        write_trace(self.trace, path)


def write_trace(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS, extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: (int(v) if isinstance(v, bool) else v) for k, v in row.items()})


def read_trace(path) -> list[dict]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rec = {k: float(v) for k, v in row.items()}
            rec["t"] = int(rec["t"])
            rec["done"] = bool(int(rec["done"]))
            out.append(rec)
    return out
