"""Comparison methods: GA, PSO, descriptor regression and the hybrid pipeline."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .features import FeatureNormalizer, extract, feature_l1, fit_normalizer, normalize
from .geometry import ViewAngles, angular_error, wrap_azimuth
from .nn import MLP, Adam, load_checkpoint, save_checkpoint, weighted_mse_grad
from .renderer import RenderConfig, Scene, render

TRACE_COLUMNS = ["iter", "best_fitness", "alpha", "beta"]


# -- objective -----------------------------------------------------------------

def fitness(candidate: ViewAngles, target_features, scene: Scene, config: RenderConfig = RenderConfig(),
            normalizer: FeatureNormalizer | None = None) -> float:
    """L1 distance between the candidate render's descriptor and the target descriptor."""
    f = extract(render(scene, candidate, config))
    if normalizer is not None:
        f = normalize(f, normalizer)
    return feature_l1(f, target_features)


def feature_objective(scene: Scene, target_features, config: RenderConfig = RenderConfig(),
                      normalizer=None) -> Callable[[float, float], float]:
    def objective(alpha, beta):
        return fitness(ViewAngles(alpha, beta), target_features, scene, config, normalizer)
    return objective


def surrogate_objective(alpha_true: float, beta_true: float) -> Callable[[float, float], float]:
    """Convex stand-in: squared alpha error plus squared circular beta error."""
    def objective(alpha, beta):
        return (alpha - alpha_true) ** 2 + angular_error(beta, beta_true, True) ** 2
    return objective


@dataclass
class SearchResult:
    angles: ViewAngles
    best_fitness: float
    trace: list            # rows of iter, best_fitness, alpha, beta
    evaluations: int
    seconds: float


def write_search_trace(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS)
        w.writeheader()
        w.writerows(rows)


def _clip_alpha(a, bounds):
    return np.clip(a, bounds[0], bounds[1])


def _arc(target, origin):
    """Vectorised shortest signed arc in degrees."""
    d = np.mod(np.asarray(target) - np.asarray(origin) + 180.0, 360.0) - 180.0
    return np.where(d == -180.0, 180.0, d)


# -- genetic algorithm ---------------------------------------------------------

@dataclass(frozen=True)
class GaConfig:
    population: int = 30
    generations: int = 50
    tournament: int = 3
    crossover_rate: float = 0.9
    mutation_rate: float = 0.2
    sigma_alpha: float = 3.0
    sigma_beta: float = 12.0
    elitism: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be >= 2")
        for name in ("crossover_rate", "mutation_rate"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0 <= self.elitism < self.population or self.tournament < 1 or self.generations < 1:
            raise ValueError("bad GA sizes")

    def with_(self, **kw):
        return replace(self, **kw)


def ga_invert(objective: Callable, config: GaConfig = GaConfig(), bounds=(30.0, 75.0)) -> SearchResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    n = config.population
    pop = np.column_stack([rng.uniform(*bounds, n), rng.uniform(0, 360, n)])
    fit = np.array([objective(a, b) for a, b in pop])
    evals = n
    trace = []

    def record(g):
        k = int(np.argmin(fit))
        trace.append({"iter": g, "best_fitness": float(fit[k]), "alpha": pop[k, 0], "beta": pop[k, 1]})

    record(0)
    sigma = np.array([config.sigma_alpha, config.sigma_beta])
    for g in range(1, config.generations + 1):
        order = np.argsort(fit, kind="stable")
        children = [pop[i].copy() for i in order[:config.elitism]]
        child_fit = [fit[i] for i in order[:config.elitism]]
        while len(children) < n:
            parents = []
            for _ in range(2):
                cand = rng.integers(n, size=config.tournament)
                parents.append(pop[cand[np.argmin(fit[cand])]])
            p1, p2 = parents
            child = p1.copy()
            if rng.random() < config.crossover_rate:
                lam = rng.uniform(-0.5, 1.5, 2)  # blend crossover with 50% extension
                child[0] = p1[0] + lam[0] * (p2[0] - p1[0])
                child[1] = p1[1] + lam[1] * _arc(p2[1], p1[1])
            mutate = rng.random(2) < config.mutation_rate
            child = child + mutate * rng.normal(0.0, sigma)
            child[0] = _clip_alpha(child[0], bounds)
            child[1] = wrap_azimuth(child[1])
            children.append(child)
            child_fit.append(objective(child[0], child[1]))
            evals += 1
        pop, fit = np.array(children), np.array(child_fit)
        record(g)
    k = int(np.argmin(fit))
    return SearchResult(ViewAngles(pop[k, 0], pop[k, 1]), float(fit[k]), trace, evals,
                        time.perf_counter() - t0)


# -- particle swarm ------------------------------------------------------------

@dataclass(frozen=True)
class PsoConfig:
    particles: int = 30
    iterations: int = 50
    inertia: float = 0.72
    cognitive: float = 1.49
    social: float = 1.49
    vmax_alpha: float = 8.0
    vmax_beta: float = 45.0
    seed: int = 0

    def __post_init__(self):
        if self.particles < 1 or self.iterations < 1:
            raise ValueError("particle and iteration counts must be positive")
        if self.vmax_alpha <= 0 or self.vmax_beta <= 0:
            raise ValueError("velocity clamp must be positive")

    def with_(self, **kw):
        return replace(self, **kw)


def pso_invert(objective: Callable, config: PsoConfig = PsoConfig(), bounds=(30.0, 75.0),
               on_iteration: Callable | None = None) -> SearchResult:
    """Global-best PSO; the azimuth moves along the shortest arc."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    n = config.particles
    vmax = np.array([config.vmax_alpha, config.vmax_beta])
    x = np.column_stack([rng.uniform(*bounds, n), rng.uniform(0, 360, n)])
    v = rng.uniform(-vmax, vmax, (n, 2))
    fit = np.array([objective(a, b) for a, b in x])
    pbest, pfit = x.copy(), fit.copy()
    g = int(np.argmin(pfit))
    gbest, gfit = pbest[g].copy(), float(pfit[g])
    trace = [{"iter": 0, "best_fitness": gfit, "alpha": gbest[0], "beta": gbest[1]}]
    evals = n
    for it in range(1, config.iterations + 1):
        r1, r2 = rng.random((n, 2)), rng.random((n, 2))
        to_p = np.column_stack([pbest[:, 0] - x[:, 0], _arc(pbest[:, 1], x[:, 1])])
        to_g = np.column_stack([gbest[0] - x[:, 0], _arc(gbest[1], x[:, 1])])
        v = config.inertia * v + config.cognitive * r1 * to_p + config.social * r2 * to_g
        v = np.clip(v, -vmax, vmax)
        x = x + v
        x[:, 0] = _clip_alpha(x[:, 0], bounds)
        x[:, 1] = np.mod(x[:, 1], 360.0)
        fit = np.array([objective(a, b) for a, b in x])
        evals += n
        better = fit < pfit
        pbest[better], pfit[better] = x[better], fit[better]
        g = int(np.argmin(pfit))
        if pfit[g] < gfit:
            gbest, gfit = pbest[g].copy(), float(pfit[g])
        trace.append({"iter": it, "best_fitness": gfit, "alpha": gbest[0], "beta": gbest[1]})
        if on_iteration is not None:
            on_iteration(it, x, v)
    return SearchResult(ViewAngles(gbest[0], wrap_azimuth(gbest[1])), gfit, trace, evals,
                        time.perf_counter() - t0)


# -- descriptor regression -----------------------------------------------------

@dataclass(frozen=True)
class RegressorConfig:
    hidden: tuple = (128, 64)
    epochs: int = 1500
    lr: float = 1e-3
    batch_size: int = 64
    seed: int = 0


@dataclass
class RegressorModel:
    net: MLP
    normalizer: FeatureNormalizer
    alpha_bounds: tuple = (30.0, 75.0)

    def save(self, path) -> None:
        save_checkpoint(path, self.net)
        self.normalizer.save(Path(str(path) + ".norm"))

    @classmethod
    def load(cls, path, alpha_bounds=(30.0, 75.0)) -> "RegressorModel":
        net, _ = load_checkpoint(path)
        return cls(net, FeatureNormalizer.load(Path(str(path) + ".norm")), tuple(alpha_bounds))


def encode_angles(alpha, beta, bounds=(30.0, 75.0)) -> np.ndarray:
    alpha, beta = np.asarray(alpha, dtype=float), np.radians(np.asarray(beta, dtype=float))
    mid, half = (bounds[0] + bounds[1]) / 2, (bounds[1] - bounds[0]) / 2
    return np.stack([(alpha - mid) / half, np.sin(beta), np.cos(beta)], axis=-1)


def decode_angles(out, bounds=(30.0, 75.0)) -> ViewAngles:
    """(alpha_norm, sin, cos) -> angles; alpha is clipped into the bounds."""
    a, s, c = (float(v) for v in out)
    mid, half = (bounds[0] + bounds[1]) / 2, (bounds[1] - bounds[0]) / 2
    alpha = mid + half * min(max(a, -1.0), 1.0)
    return ViewAngles(alpha, wrap_azimuth(math.degrees(math.atan2(s, c))))


def dl_train(features, angles, config: RegressorConfig = RegressorConfig(),
             alpha_bounds=(30.0, 75.0)) -> RegressorModel:
    """Fit the regressor on raw descriptors (rows) and (alpha, beta) labels."""
    x = np.asarray(features, dtype=float)
    ang = np.asarray(angles, dtype=float).reshape(-1, 2)
    if len(x) == 0:
        raise ValueError("empty training set")
    norm = fit_normalizer(x) if len(x) >= 2 else FeatureNormalizer(x[0] * 0, np.ones(x.shape[1]))
    xn = normalize(x, norm)
    y = encode_angles(ang[:, 0], ang[:, 1], alpha_bounds)
    net = MLP((x.shape[1],) + tuple(config.hidden) + (3,), seed=config.seed)
    opt = Adam(net.params, lr=config.lr)
    rng = np.random.default_rng([config.seed, 3])
    bs = min(config.batch_size, len(x))
    ones = np.ones(bs * 3)
    for _ in range(config.epochs):
        perm = rng.permutation(len(x))
        for s in range(0, len(x) - bs + 1, bs):
            idx = perm[s:s + bs]
            out, acts = net.forward_cache(xn[idx])
            _, g = weighted_mse_grad(out.ravel(), y[idx].ravel(), ones)
            grads, _ = net.backward(acts, g.reshape(out.shape))
            opt.step(grads)
    return RegressorModel(net, norm, tuple(alpha_bounds))


def dl_predict(model: RegressorModel, image) -> ViewAngles:
    f = extract(image) if np.asarray(getattr(image, "intensity", image)).ndim == 2 else np.asarray(image)
    out = model.net.forward(normalize(f, model.normalizer)[None])[0]
    return decode_angles(out, model.alpha_bounds)


def dl_plus_drl(image, model: RegressorModel, policy: Callable, env, truth=None):
    """Start the environment at the regression estimate and refine with ``policy``.

    ``env`` should use the fine action table and a 10-step budget.
    Returns (final angles, rollout).
    """
    from .agent import rollout

    init = dl_predict(model, image)
    roll = rollout(policy, env, truth=truth, init=init.as_tuple(), input_image=image)
    return ViewAngles(*roll.estimate), roll
