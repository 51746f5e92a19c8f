"""Flat ``key=value`` experiment configuration.

Every key has a typed default; unknown keys are rejected. The resolved
configuration is written next to every run's outputs and can be fed back
in unchanged.
"""

from __future__ import annotations

from pathlib import Path

from .agent import TrainConfig
from .baselines import GaConfig, PsoConfig, RegressorConfig
from .environment import EnvConfig, RewardParams
from .renderer import RenderConfig, default_scene


class ConfigError(ValueError):
    pass


DEFAULTS: dict = {
    # scene
    "scene.kind": "tank_like",
    "scene.obj": "",
    "scene.seed": 0,
    "scene.max_edge": 1.0,
    # renderer
    "render.image_size": 128,
    "render.samples_per_facet": 64,
    "render.speckle": False,
    "render.seed": 0,
    # environment
    "env.max_steps": 20,
    "env.alpha_min": 30.0,
    "env.alpha_max": 75.0,
    "env.actions": "coarse",
    "env.use_sd": True,
    "env.use_fd": True,
    "env.use_r1": True,
    "env.use_r2": True,
    "env.use_r3": True,
    "env.eta_alpha": -0.05,
    "env.eta_beta": -0.2,
    "env.boundary_penalty": -10.0,
    "env.bonus": 5.0,
    "env.literal_exp_sign": False,
    "env.success_threshold": 2.0,
    "env.normalizer_samples": 256,
    # agent
    "agent.episodes": 500,
    "agent.batch_size": 256,
    "agent.lr": 1e-5,
    "agent.gamma": 0.96,
    "agent.target_sync": 200,
    "agent.eps_start": 0.5,
    "agent.eps_end": 0.01,
    "agent.eps_fraction": 0.8,
    "agent.buffer_capacity": 50_000,
    "agent.per_alpha": 0.6,
    "agent.per_beta0": 0.4,
    "agent.per_beta1": 1.0,
    "agent.per_eps": 1e-3,
    "agent.updates_per_step": 1,
    "agent.learning_starts": 0,
    "agent.seed": 0,
    # baselines
    "ga.population": 30,
    "ga.generations": 50,
    "ga.tournament": 3,
    "ga.crossover_rate": 0.9,
    "ga.mutation_rate": 0.2,
    "ga.sigma_alpha": 3.0,
    "ga.sigma_beta": 12.0,
    "ga.elitism": 1,
    "ga.seed": 0,
    "pso.particles": 30,
    "pso.iterations": 50,
    "pso.inertia": 0.72,
    "pso.cognitive": 1.49,
    "pso.social": 1.49,
    "pso.vmax_alpha": 8.0,
    "pso.vmax_beta": 45.0,
    "pso.seed": 0,
    "dl.epochs": 1500,
    "dl.lr": 1e-3,
    "dl.batch_size": 64,
    "dl.seed": 0,
    "dldrl.max_steps": 10,
    "dldrl.checkpoint": "",
    # datasets and evaluation
    "dataset.kind": "grid",
    "dataset.n": 576,
    "dataset.seed": 0,
    "eval.episodes": 100,
    "eval.seed": 1000,
    "eval.baseline_episodes": 0,
    "behavioral.episodes": 200,
    "checkpoint": "",
    "out_dir": "runs/default",
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _parse_value(key: str, raw) -> object:
    default = DEFAULTS[key]
    if not isinstance(raw, str):
        raw = str(raw)
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(default).__name__}") from None
    return raw


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


class ExperimentConfig:
    def __init__(self, values: dict | None = None):
        self.values = dict(DEFAULTS)
        for k, v in (values or {}).items():
            self.set(k, v)

    def set(self, key: str, value) -> None:
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key: {key}")
        self.values[key] = _parse_value(key, value)

    def __getitem__(self, key):
        if key not in self.values:
            raise ConfigError(f"unknown config key: {key}")
        return self.values[key]

    def override(self, assignments) -> "ExperimentConfig":
        out = ExperimentConfig(self.values)
        for item in assignments or ():
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not key=value")
            k, v = item.split("=", 1)
            out.set(k.strip(), v)
        return out

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        values = {}
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            k, v = line.split("=", 1)
            k = k.strip()
            if k not in DEFAULTS:
                raise ConfigError(f"{path}:{lineno}: unknown config key: {k}")
            values[k] = v
        return cls(values)

    def dump(self) -> str:
        return "".join(f"{k}={_fmt(v)}\n" for k, v in self.values.items())

    def save(self, path) -> None:
        Path(path).write_text(self.dump())

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.values == other.values

    # -- typed views
    @property
    def alpha_bounds(self) -> tuple:
        return (self["env.alpha_min"], self["env.alpha_max"])

    def scene(self):
        from .fileio import load_obj
        from .renderer import build_scene

        if self["scene.obj"]:
            mesh = load_obj(self["scene.obj"])
            return build_scene(mesh, seed=self["scene.seed"], alpha_range=self.alpha_bounds)
        return default_scene(self["scene.kind"], seed=self["scene.seed"], max_edge=self["scene.max_edge"],
                             alpha_range=self.alpha_bounds)

    def render_config(self) -> RenderConfig:
        return RenderConfig(image_size=self["render.image_size"],
                            samples_per_facet=self["render.samples_per_facet"],
                            speckle=self["render.speckle"], seed=self["render.seed"],
                            alpha_bounds=self.alpha_bounds)

    def reward_params(self) -> RewardParams:
        return RewardParams(eta_alpha=self["env.eta_alpha"], eta_beta=self["env.eta_beta"],
                            boundary_penalty=self["env.boundary_penalty"], bonus=self["env.bonus"],
                            literal_exp_sign=self["env.literal_exp_sign"])

    def env_config(self, **kw) -> EnvConfig:
        if self["env.max_steps"] < 1:
            raise ConfigError("env.max_steps must be >= 1")
        cfg = EnvConfig(max_steps=self["env.max_steps"], alpha_bounds=self.alpha_bounds,
                        actions=self["env.actions"], rewards=self.reward_params(),
                        use_sd=self["env.use_sd"], use_fd=self["env.use_fd"], use_r1=self["env.use_r1"],
                        use_r2=self["env.use_r2"], use_r3=self["env.use_r3"],
                        success_threshold=self["env.success_threshold"])
        return cfg.with_(**kw)

    def train_config(self) -> TrainConfig:
        return TrainConfig(**{k.split(".", 1)[1]: v for k, v in self.values.items() if k.startswith("agent.")})

    def ga_config(self) -> GaConfig:
        return GaConfig(**{k[3:]: v for k, v in self.values.items() if k.startswith("ga.")})

    def pso_config(self) -> PsoConfig:
        return PsoConfig(**{k[4:]: v for k, v in self.values.items() if k.startswith("pso.")})

    def regressor_config(self) -> RegressorConfig:
        return RegressorConfig(epochs=self["dl.epochs"], lr=self["dl.lr"], batch_size=self["dl.batch_size"],
                               seed=self["dl.seed"])

    def validate(self) -> "ExperimentConfig":
        """Build every typed view once so bad values surface as ConfigError."""
        if self["env.actions"] not in ("coarse", "fine"):
            raise ConfigError(f"env.actions must be coarse or fine, not {self['env.actions']!r}")
        if self["dataset.kind"] not in ("grid", "distribution"):
            raise ConfigError(f"dataset.kind must be grid or distribution, not {self['dataset.kind']!r}")
        try:
            self.render_config()
            self.env_config()
            self.train_config()
            self.ga_config()
            self.pso_config()
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return self
