"""Datasets and experiment orchestration.

Every ``run_*`` entry point takes an :class:`ExperimentConfig`, writes its
outputs plus the resolved config into ``out_dir`` and returns the rows it
wrote.
"""

from __future__ import annotations

import csv
import shutil
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import agent as agent_mod
from .baselines import (RegressorModel, dl_plus_drl, dl_predict, dl_train, feature_objective, ga_invert,
                        pso_invert, write_search_trace)
from .config import ExperimentConfig
from .environment import SarViewEnv, write_trace
from .features import FeatureNormalizer, extract, fit_normalizer
from .fileio import save_image
from .geometry import ViewAngles
from .metrics import METRIC_COLUMNS, metrics_record, read_table, write_table
from .renderer import render

MANIFEST_COLUMNS = ["path", "alpha", "beta", "seed"]
COMPARISON_METHODS = ["GA", "PSO", "DL", "DRL", "DL+DRL", "Random"]


# -- datasets ------------------------------------------------------------------

def grid_angles(alpha_lo=35, alpha_hi=70, alpha_step=5, beta_step=5):
    return [(float(a), float(b)) for a in np.arange(alpha_lo, alpha_hi + 1e-9, alpha_step)
            for b in np.arange(0, 360, beta_step)]


def distribution_support(a=35.0, b=75.0, rho=5.0):
    """Discrete uniform support {a, a + rho, ..., b}."""
    return np.arange(a, b + 1e-9, rho)


def distribution_angles(n, seed, a=35.0, b=75.0, rho=5.0, c=0.0, d=360.0, upsilon=5.0):
    rng = np.random.default_rng(seed)
    alphas = distribution_support(a, b, rho)
    betas = np.arange(c, d - 1e-9, upsilon)
    return [(float(rng.choice(alphas)), float(rng.choice(betas))) for _ in range(n)]


def gen_dataset(cfg: ExperimentConfig, out_dir=None, scene=None):
    """Render the configured dataset; returns the manifest rows."""
    out = Path(out_dir or Path(cfg["out_dir"]) / "dataset")
    out.mkdir(parents=True, exist_ok=True)
    if cfg["dataset.kind"] == "grid":
        angles = grid_angles()
    else:
        angles = distribution_angles(cfg["dataset.n"], cfg["dataset.seed"])
    scene = scene or cfg.scene()
    rc = cfg.render_config()
    rows = []
    for k, (a, b) in enumerate(angles):
        path = out / f"img_{k:05d}.pgm"
        save_image(render(scene, ViewAngles(a, b), rc), path)
        rows.append({"path": path.name, "alpha": a, "beta": b, "seed": rc.seed})
    write_manifest(rows, out / "manifest.csv")
    cfg.save(out / "resolved_config.txt")
    return rows


def write_manifest(rows, path) -> None:
    write_table(rows, path, MANIFEST_COLUMNS)


def read_manifest(path) -> list[dict]:
    rows = read_table(path)
    base = Path(path).parent
    for r in rows:
        r["path"] = str(r["path"])
        if not (base / r["path"]).exists():
            raise FileNotFoundError(f"manifest entry {r['path']} missing under {base}")
        r["alpha"], r["beta"] = float(r["alpha"]), float(r["beta"])
    return rows


def manifest_features(path) -> tuple[np.ndarray, np.ndarray]:
    """Descriptors from the raw ``.npy`` intensities next to each PGM."""
    rows = read_manifest(path)
    base = Path(path).parent
    x = np.array([extract(np.load((base / r["path"]).with_suffix(".npy"))) for r in rows])
    y = np.array([(r["alpha"], r["beta"]) for r in rows])
    return x, y


# -- shared lab state ----------------------------------------------------------

@dataclass
class Lab:
    """Scene, render settings and feature normalizer shared by all methods."""

    cfg: ExperimentConfig
    scene: object
    render_config: object
    normalizer: FeatureNormalizer

    @classmethod
    def build(cls, cfg: ExperimentConfig) -> "Lab":
        scene = cfg.scene()
        rc = cfg.render_config()
        return cls(cfg, scene, rc, scene_normalizer(scene, rc, cfg["env.normalizer_samples"], cfg["scene.seed"],
                                                    cfg.alpha_bounds))

    def env_factory(self, **env_kw):
        env_cfg = self.cfg.env_config(**env_kw)
        return lambda: SarViewEnv(self.scene, self.render_config, env_cfg, normalizer=self.normalizer)

    def eval_env(self, **env_kw):
        return self.env_factory(mode="eval", **env_kw)()

    def image(self, alpha, beta):
        return render(self.scene, ViewAngles(alpha, beta), self.render_config)


def scene_normalizer(scene, render_config, n=256, seed=0, bounds=(30.0, 75.0)) -> FeatureNormalizer:
    """Feature statistics over renders at random view angles."""
    rng = np.random.default_rng([seed, 0xF17])
    imgs = [render(scene, ViewAngles(rng.uniform(*bounds), rng.uniform(0, 360)), render_config)
            for _ in range(max(2, n))]
    return fit_normalizer(imgs)


def _out(cfg, sub=None) -> Path:
    out = Path(cfg["out_dir"]) / sub if sub else Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def shared_episodes(lab: Lab, n: int):
    """Shared seeded test set: (seed, truth, init) per episode."""
    env = lab.eval_env()
    out = []
    for k in range(n):
        s = agent_mod.episode_seed(lab.cfg["eval.seed"], k)
        env.rng = np.random.default_rng(s)
        truth = env.sample_angles()
        init = env.sample_angles()
        out.append((s, truth, init))
    return out


# -- training and evaluation ---------------------------------------------------

def run_train(cfg: ExperimentConfig, lab: Lab | None = None, out_dir=None, **env_kw):
    lab = lab or Lab.build(cfg)
    out = Path(out_dir) if out_dir else _out(cfg)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "resolved_config.txt")
    lab.normalizer.save(out / "normalizer.txt")
    agent, curve = agent_mod.train(lab.env_factory(**env_kw), cfg.train_config(), out_dir=out)
    return out / "agent.ckpt", curve


def _rollouts(lab, policy, episodes, **env_kw):
    env = lab.eval_env(**env_kw)
    return [agent_mod.rollout(policy, env, seed=s, truth=truth, init=init) for s, truth, init in episodes]


def _estimates_rows(method, rolls):
    return [{"method": method, "episode": k, "truth_alpha": r.truth[0], "truth_beta": r.truth[1],
             "est_alpha": r.estimate[0], "est_beta": r.estimate[1], "steps": r.steps, "seconds": r.seconds}
            for k, r in enumerate(rolls)]


def run_eval(cfg: ExperimentConfig, checkpoint=None, lab: Lab | None = None, **env_kw):
    lab = lab or Lab.build(cfg)
    out = _out(cfg)
    cfg.save(out / "resolved_config.txt")
    agent = agent_mod.DQNAgent.from_checkpoint(checkpoint or cfg["checkpoint"])
    rolls = _rollouts(lab, agent_mod.greedy_policy(agent), shared_episodes(lab, cfg["eval.episodes"]), **env_kw)
    rec = agent_mod.metrics_from_rollouts(rolls)
    write_table([rec.as_row(method="DRL")], out / "metrics.csv", ["method"] + METRIC_COLUMNS)
    write_table(_estimates_rows("DRL", rolls), out / "estimates.csv")
    return rec, rolls


# -- baselines -----------------------------------------------------------------

def _search_method(lab, episodes, method, out):
    preds, truths, secs = [], [], []
    cfg = lab.cfg
    for k, (_, truth, _) in enumerate(episodes):
        target = lab.normalizer(extract(lab.image(*truth)))
        obj = feature_objective(lab.scene, target, lab.render_config, lab.normalizer)
        if method == "GA":
            res = ga_invert(obj, cfg.ga_config().with_(seed=cfg["ga.seed"] + k), cfg.alpha_bounds)
        else:
            res = pso_invert(obj, cfg.pso_config().with_(seed=cfg["pso.seed"] + k), cfg.alpha_bounds)
        write_search_trace(res.trace, out / f"{method.lower()}_trace_{k:03d}.csv")
        preds.append(res.angles.as_tuple())
        truths.append(truth)
        secs.append(res.seconds)
    return metrics_record(preds, truths, runtime_s=float(np.mean(secs)),
                          mean_steps=float(res.evaluations)), preds


def train_regressor(lab: Lab, out: Path) -> RegressorModel:
    ds = out / "dataset"
    gen_dataset(lab.cfg, ds, lab.scene)
    x, y = manifest_features(ds / "manifest.csv")
    model = dl_train(x, y, lab.cfg.regressor_config(), lab.cfg.alpha_bounds)
    model.save(out / "regressor.ckpt")
    return model


def _dl_method(lab, model, episodes):
    preds, truths, secs = [], [], []
    for _, truth, _ in episodes:
        img = lab.image(*truth)
        t0 = time.perf_counter()
        preds.append(dl_predict(model, img).as_tuple())
        secs.append(time.perf_counter() - t0)
        truths.append(truth)
    return metrics_record(preds, truths, runtime_s=float(np.mean(secs)))


def _dl_drl_method(lab, model, agent, episodes):
    env = lab.eval_env(actions="fine", max_steps=lab.cfg["dldrl.max_steps"])
    policy = agent_mod.greedy_policy(agent)
    rolls = []
    for _, truth, _ in episodes:
        img = lab.image(*truth)
        t0 = time.perf_counter()
        _, roll = dl_plus_drl(img, model, policy, env, truth=truth)
        roll.seconds = time.perf_counter() - t0
        rolls.append(roll)
    return agent_mod.metrics_from_rollouts(rolls), rolls


def run_baseline(cfg: ExperimentConfig, method: str, lab: Lab | None = None):
    """One comparison method on the shared test set."""
    lab = lab or Lab.build(cfg)
    out = _out(cfg)
    cfg.save(out / "resolved_config.txt")
    episodes = shared_episodes(lab, cfg["eval.episodes"])
    if method in ("GA", "PSO"):
        n = cfg["eval.baseline_episodes"] or len(episodes)
        rec, _ = _search_method(lab, episodes[:n], method, out)
    elif method == "DL":
        rec = _dl_method(lab, train_regressor(lab, out), episodes)
    elif method == "Random":
        rolls = _rollouts(lab, agent_mod.random_policy(cfg["eval.seed"]), episodes)
        rec = agent_mod.metrics_from_rollouts(rolls)
    else:
        raise ValueError(f"unknown baseline {method!r}; choose GA, PSO, DL or Random")
    write_table([rec.as_row(method=method)], out / f"{method.lower()}_metrics.csv", ["method"] + METRIC_COLUMNS)
    return rec


def run_comparison(cfg: ExperimentConfig, lab: Lab | None = None):
    """All six methods on one shared seeded test set; writes comparison.csv."""
    lab = lab or Lab.build(cfg)
    out = _out(cfg)
    cfg.save(out / "resolved_config.txt")
    ckpt = cfg["checkpoint"]
    if not ckpt:
        ckpt, _ = run_train(cfg, lab, out_dir=out / "agent")
    agent = agent_mod.DQNAgent.from_checkpoint(ckpt)
    fine_ckpt = cfg["dldrl.checkpoint"]
    fine_agent = agent_mod.DQNAgent.from_checkpoint(fine_ckpt) if fine_ckpt else agent
    episodes = shared_episodes(lab, cfg["eval.episodes"])
    n_search = cfg["eval.baseline_episodes"] or len(episodes)

    results = {}
    for method in ("GA", "PSO"):
        results[method], _ = _search_method(lab, episodes[:n_search], method, out)
    model = train_regressor(lab, out)
    results["DL"] = _dl_method(lab, model, episodes)
    rolls = _rollouts(lab, agent_mod.greedy_policy(agent), episodes)
    results["DRL"] = agent_mod.metrics_from_rollouts(rolls)
    results["DL+DRL"], hybrid = _dl_drl_method(lab, model, fine_agent, episodes)
    results["Random"] = agent_mod.metrics_from_rollouts(
        _rollouts(lab, agent_mod.random_policy(cfg["eval.seed"]), episodes))
    rows = [results[m].as_row(method=m) for m in COMPARISON_METHODS]
    write_table(rows, out / "comparison.csv", ["method"] + METRIC_COLUMNS)
    write_table(_estimates_rows("DRL", rolls) + _estimates_rows("DL+DRL", hybrid), out / "estimates.csv")
    if hybrid:
        write_trace(hybrid[0].trace, out / "dldrl_trace_000.csv")
    return rows


# -- behavioral analysis -------------------------------------------------------

def error_by_step(rolls, max_steps: int) -> np.ndarray:
    """(episodes, max_steps + 1) mean-angle error, holding the final value after termination."""
    out = np.empty((len(rolls), max_steps + 1))
    for i, r in enumerate(rolls):
        e = [0.5 * (a + b) for a, b in r.errors]
        e = e + [e[-1]] * (max_steps + 1 - len(e))
        out[i] = e[:max_steps + 1]
    return out


def action_phase_frequencies(rolls, n_levels: int = 3) -> dict:
    """Frequency of each magnitude level (0 = terminal) in the early and late half of episodes."""
    counts = {"early": np.zeros(n_levels + 1), "late": np.zeros(n_levels + 1)}
    for r in rolls:
        half = (len(r.levels) + 1) // 2
        for lvl in r.levels[:half]:
            counts["early"][lvl] += 1
        for lvl in r.levels[half:]:
            counts["late"][lvl] += 1
    return {ph: (c / c.sum() if c.sum() else c) for ph, c in counts.items()}


def run_behavioral(cfg: ExperimentConfig, checkpoint=None, lab: Lab | None = None):
    lab = lab or Lab.build(cfg)
    out = _out(cfg)
    cfg.save(out / "resolved_config.txt")
    ckpt = Path(checkpoint or cfg["checkpoint"])
    agent = agent_mod.DQNAgent.from_checkpoint(ckpt)
    episodes = shared_episodes(lab, cfg["behavioral.episodes"])
    rolls = _rollouts(lab, agent_mod.greedy_policy(agent), episodes)
    err = error_by_step(rolls, cfg["env.max_steps"])
    norm = err / np.maximum(err[:, :1], 1e-12)
    step_rows = [{"step": k, "norm_error": float(norm[:, k].mean()), "mean_error": float(err[:, k].mean()),
                  "median_error": float(np.median(err[:, k]))} for k in range(err.shape[1])]
    write_table(step_rows, out / "mae_vs_step.csv")
    freq = action_phase_frequencies(rolls)
    phase_rows = [{"phase": ph, "level": lvl, "frequency": float(f)}
                  for ph, fr in freq.items() for lvl, f in enumerate(fr)]
    write_table(phase_rows, out / "action_phase.csv")
    curve = ckpt.parent / "reward_curve.csv"
    if curve.exists() and curve.resolve() != (out / "reward_curve.csv").resolve():
        shutil.copy(curve, out / "reward_curve.csv")
    return step_rows, phase_rows


# -- ablations -----------------------------------------------------------------

STATE_VARIANTS = [("no SD, no FD", False, False), ("SD only", True, False), ("SD + FD", True, True)]
REWARD_VARIANTS = [("R_base", False, False, False), ("R_base + R1", True, False, False),
                   ("R_base + R1 + R2", True, True, False), ("full", True, True, True)]
ABLATION_COLUMNS = ["table", "variant", "use_sd", "use_fd", "use_r1", "use_r2", "use_r3",
                    "MAE_alpha", "MAE_beta", "MAE_mean", "outliers", "checkpoint"]


def ablation_variants():
    rows = [("state", name, sd, fd, True, True, True) for name, sd, fd in STATE_VARIANTS]
    rows += [("reward", name, True, True, r1, r2, r3) for name, r1, r2, r3 in REWARD_VARIANTS]
    return rows


def run_ablation(cfg: ExperimentConfig, lab: Lab | None = None):
    """Train and evaluate every state and reward variant on shared seeds.

    The full variant appears in both tables and is trained once.
    """
    lab = lab or Lab.build(cfg)
    out = _out(cfg)
    cfg.save(out / "resolved_config.txt")
    episodes = shared_episodes(lab, cfg["eval.episodes"])
    done: dict = {}
    rows = []
    for table, name, sd, fd, r1, r2, r3 in ablation_variants():
        switches = dict(use_sd=sd, use_fd=fd, use_r1=r1, use_r2=r2, use_r3=r3)
        key = tuple(switches.values())
        if key not in done:
            tag = "sd{:d}_fd{:d}_r{:d}{:d}{:d}".format(*key)
            vcfg = cfg.override([f"env.{k}={v}" for k, v in switches.items()])
            ckpt, _ = run_train(vcfg, lab, out_dir=out / tag, **switches)
            agent = agent_mod.DQNAgent.from_checkpoint(ckpt)
            rolls = _rollouts(lab, agent_mod.greedy_policy(agent), episodes, **switches)
            write_table(_estimates_rows(tag, rolls), out / tag / "estimates.csv")
            done[key] = (agent_mod.metrics_from_rollouts(rolls), ckpt)
        rec, ckpt = done[key]
        rows.append({"table": table, "variant": name, **switches, "MAE_alpha": rec.MAE_alpha,
                     "MAE_beta": rec.MAE_beta, "MAE_mean": rec.MAE_mean, "outliers": rec.outliers,
                     "checkpoint": str(ckpt)})
    write_table(rows, out / "ablation.csv", ABLATION_COLUMNS)
    return rows


def read_csv_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
