"""Dueling double-DQN agent with prioritized replay."""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .environment import N_ACTIONS, STATE_DIM
from .metrics import MetricsRecord, metrics_record
from .nn import Adam, DuelingNet, load_checkpoint, q_loss_grad, save_checkpoint
from .replay import PrioritizedReplay

REWARD_CURVE_COLUMNS = ["episode", "cum_reward", "epsilon", "steps"]


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 500
    batch_size: int = 256
    lr: float = 1e-5
    gamma: float = 0.96
    target_sync: int = 200
    eps_start: float = 0.5
    eps_end: float = 0.01
    eps_fraction: float = 0.8
    buffer_capacity: int = 50_000
    per_alpha: float = 0.6
    per_beta0: float = 0.4
    per_beta1: float = 1.0
    per_eps: float = 1e-3
    updates_per_step: int = 1
    learning_starts: int = 0          # 0 means one full batch
    hidden: tuple = (256, 128)
    seed: int = 0

    def __post_init__(self):
        positive = ("episodes", "batch_size", "lr", "gamma", "target_sync", "buffer_capacity",
                    "eps_fraction", "updates_per_step")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.eps_end <= self.eps_start <= 1:
            raise ValueError("need 0 <= eps_end <= eps_start <= 1")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")

    def with_(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


def linear_schedule(step: int, start: float, end: float, horizon: float) -> float:
    if horizon <= 0:
        return end
    frac = min(1.0, step / horizon)
    return start + (end - start) * frac


def greedy(q: np.ndarray) -> int:
    """Argmax with lowest-index tie-break."""
    return int(np.argmax(q))


def select_action(net, state, epsilon: float, rng) -> int:
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if epsilon > 0 and rng.random() < epsilon:
        return int(rng.integers(N_ACTIONS))
    return greedy(net.forward(np.asarray(state)[None])[0])


def td_target(batch: dict, online, target, gamma: float) -> np.ndarray:
    """Double-Q target: online net picks the next action, target net scores it."""
    nxt = batch["next_states"]
    a_star = np.argmax(online.forward(nxt), axis=1)
    q_next = target.forward(nxt)[np.arange(len(a_star)), a_star]
    done = np.asarray(batch["dones"], dtype=bool)
    return np.asarray(batch["rewards"], dtype=float) + gamma * np.where(done, 0.0, q_next)


class DQNAgent:
    def __init__(self, config: TrainConfig = TrainConfig(), state_dim: int = STATE_DIM):
        self.config = config
        sizes = (state_dim,) + tuple(config.hidden)
        self.online = DuelingNet(sizes, N_ACTIONS, seed=config.seed)
        self.target = DuelingNet(sizes, N_ACTIONS, seed=config.seed)
        self.target.copy_from(self.online)
        self.optimizer = Adam(self.online.params, lr=config.lr)
        self.replay = PrioritizedReplay(config.buffer_capacity, state_dim, config.per_alpha, config.per_eps)
        self.rng = np.random.default_rng([config.seed, 7])
        self.opt_steps = 0
        self.env_steps = 0
        self.last_loss = float("nan")

    @classmethod
    def from_checkpoint(cls, path, config: TrainConfig | None = None) -> "DQNAgent":
        net, opt = load_checkpoint(path)
        if not isinstance(net, DuelingNet):
            raise ValueError(f"{path}: not a Q-network checkpoint")
        config = config or TrainConfig(hidden=tuple(net.dims[1:-1]))
        agent = cls.__new__(cls)
        agent.config = config
        agent.online = net
        agent.target = DuelingNet(net.dims[:-1], net.dims[-1])
        agent.target.copy_from(net)
        agent.optimizer = opt or Adam(net.params, lr=config.lr)
        agent.replay = None
        agent.rng = np.random.default_rng([config.seed, 7])
        agent.opt_steps = agent.env_steps = 0
        agent.last_loss = float("nan")
        return agent

    def save(self, path) -> None:
        save_checkpoint(path, self.online, self.optimizer)

    def act(self, state, epsilon: float = 0.0) -> int:
        return select_action(self.online, state, epsilon, self.rng)

    def learn(self, beta: float) -> float:
        cfg = self.config
        idx, w, batch = self.replay.sample(cfg.batch_size, beta, self.rng)
        y = td_target(batch, self.online, self.target, cfg.gamma)
        loss, td, grads = q_loss_grad(self.online, batch["states"], batch["actions"], y, w)
        self.optimizer.step(grads)
        self.replay.update(idx, td)
        self.opt_steps += 1
        if self.opt_steps % cfg.target_sync == 0:
            self.target.copy_from(self.online)
        self.last_loss = loss
        return loss


def episode_seed(base: int, episode: int) -> int:
    return int(np.random.SeedSequence([base, episode]).generate_state(1)[0])


def train(env_factory: Callable, config: TrainConfig = TrainConfig(), out_dir=None,
          progress: Callable | None = None):
    """Run ``config.episodes`` episodes; returns (agent, reward-curve rows).

    If ``out_dir`` is given, the checkpoint and reward curve are written there,
    including after an environment failure (the exception is re-raised).
    """
    env = env_factory()
    agent = DQNAgent(config, state_dim=getattr(env, "state_dim", STATE_DIM))
    horizon = config.episodes * env.config.max_steps
    eps_horizon = config.eps_fraction * horizon
    warmup = config.learning_starts or config.batch_size
    curve = []
    try:
        for ep in range(config.episodes):
            state = env.reset(seed=episode_seed(config.seed, ep))
            eps = linear_schedule(agent.env_steps, config.eps_start, config.eps_end, eps_horizon)
            total, steps, done = 0.0, 0, False
            while not done:
                eps = linear_schedule(agent.env_steps, config.eps_start, config.eps_end, eps_horizon)
                a = agent.act(state, eps)
                res = env.step(a)
                # time-limit truncation keeps the bootstrap
                agent.replay.push(state, a, res.reward, res.state, res.info["terminated"])
                state, done = res.state, res.done
                total += res.reward
                steps += 1
                agent.env_steps += 1
                if len(agent.replay) >= warmup:
                    beta = linear_schedule(agent.env_steps, config.per_beta0, config.per_beta1, horizon)
                    for _ in range(config.updates_per_step):
                        agent.learn(beta)
            curve.append({"episode": ep, "cum_reward": total, "epsilon": eps, "steps": steps})
            if progress is not None:
                progress(ep, curve[-1], agent)
    finally:
        if out_dir is not None:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            agent.save(out / "agent.ckpt")
            write_reward_curve(curve, out / "reward_curve.csv")
    return agent, curve


def write_reward_curve(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REWARD_CURVE_COLUMNS)
        w.writeheader()
        w.writerows(rows)


def read_reward_curve(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{"episode": int(r["episode"]), "cum_reward": float(r["cum_reward"]),
                 "epsilon": float(r["epsilon"]), "steps": int(r["steps"])} for r in csv.DictReader(fh)]


@dataclass
class Rollout:
    truth: tuple
    init: tuple
    estimate: tuple
    steps: int
    seconds: float
    errors: list = field(default_factory=list)   # (err_alpha, err_beta) after each step, index 0 = init
    actions: list = field(default_factory=list)
    levels: list = field(default_factory=list)
    trace: list = field(default_factory=list)


def rollout(policy: Callable, env, seed=None, truth=None, init=None, input_image=None) -> Rollout:
    """Run one episode with ``policy(state, env) -> action``."""
    t0 = time.perf_counter()
    state = env.reset(seed=seed, truth=truth, init=init, input_image=input_image)
    errors = [env.err]
    actions, levels = [], []
    done = False
    while not done:
        a = policy(state, env)
        res = env.step(a)
        state, done = res.state, res.done
        errors.append(env.err)
        actions.append(a)
        levels.append(res.info["level"])
    return Rollout(env.truth, env.init, env.estimate(), len(actions), time.perf_counter() - t0,
                   errors, actions, levels, list(env.trace))


def greedy_policy(agent_or_net):
    net = getattr(agent_or_net, "online", agent_or_net)
    return lambda state, env: greedy(net.forward(state[None])[0])


def random_policy(seed=0):
    rng = np.random.default_rng(seed)
    return lambda state, env: int(rng.integers(N_ACTIONS))


def oracle_policy(state, env) -> int:
    """Scripted policy: the action whose move lands closest to the truth."""
    from .geometry import angular_error, wrap_azimuth

    ta, tb = env.truth
    best, best_err = 0, 0.5 * (env.err[0] + env.err[1])
    for i, (dx, dy) in enumerate(env.table.deltas):
        if i == 0:
            continue
        lo, hi = env.config.alpha_bounds
        a = min(max(env.alpha + dx, lo), hi)
        b = wrap_azimuth(env.beta + dy)
        err = 0.5 * (angular_error(a, ta) + angular_error(b, tb, True))
        if err < best_err - 1e-12:
            best, best_err = i, err
    return best


def evaluate(agent_or_path, env_factory: Callable, n_episodes: int, seed: int = 1000, policy=None):
    """Greedy rollouts on seeded episodes; returns (metrics record, rollouts)."""
    if policy is None:
        agent = agent_or_path
        if isinstance(agent_or_path, (str, Path)):
            agent = DQNAgent.from_checkpoint(agent_or_path)
        policy = greedy_policy(agent)
    env = env_factory()
    rolls = [rollout(policy, env, seed=episode_seed(seed, k)) for k in range(n_episodes)]
    return metrics_from_rollouts(rolls), rolls


def metrics_from_rollouts(rolls) -> MetricsRecord:
    return metrics_record([r.estimate for r in rolls], [r.truth for r in rolls],
                          runtime_s=float(np.mean([r.seconds for r in rolls])),
                          mean_steps=float(np.mean([r.steps for r in rolls])))


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
