"""Declarative run configuration binding every module's knobs.

A config document is JSON (nested objects mirror the sections below).
Unknown keys are rejected; CLI flags override file values, and every
default is recorded so a bare config file reproduces the reference run.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .env import EnvConfig
from .errors import ConfigError
from .phantom import PhantomSpec
from .ppo import AgentTrainConfig, PpoConfig
from .region_grow import GrowConfig
from .surrogate import SurrogateTrainConfig


@dataclass
class PhantomSection:
    dims: list = field(default_factory=lambda: [32, 32, 32])
    channels: int = 3
    lesion_count: int = 1
    lesion_radius_min: int = 5
    lesion_radius_max: int = 7
    lesion_contrast: float = 0.45
    heterogeneity: float = 0.05
    noise_std: float = 0.5
    count: int = 20
    negative_count: int = 0

    def spec(self, rng_seed: int, lesion_count: int | None = None) -> PhantomSpec:
        return PhantomSpec(
            dims=tuple(self.dims),
            channels=self.channels,
            lesion_count=self.lesion_count if lesion_count is None else lesion_count,
            lesion_radius_range=(self.lesion_radius_min, self.lesion_radius_max),
            lesion_contrast=self.lesion_contrast,
            heterogeneity=self.heterogeneity,
            noise_std=self.noise_std,
            rng_seed=rng_seed,
        )


@dataclass
class SurrogateSection:
    hidden: int = 12
    lr: float = 1.0
    lr_min: float = 0.01
    epochs: int = 100
    batch_size: int = 4
    optimiser: str = "gd"
    weight_decay: float = 0.012

    def train_config(self, rng_seed: int) -> SurrogateTrainConfig:
        return SurrogateTrainConfig(
            hidden=self.hidden, lr=self.lr, lr_min=self.lr_min,
            epochs=self.epochs, batch_size=self.batch_size,
            optimiser=self.optimiser, weight_decay=self.weight_decay,
            rng_seed=rng_seed)


@dataclass
class GrowSection:
    radius: list = field(default_factory=lambda: [1, 1, 1])
    tau_sigma: float = 0.3
    tau_e: float = 0.1
    max_iters: int = 200

    def grow_config(self) -> GrowConfig:
        return GrowConfig(radius=tuple(self.radius), tau_sigma=self.tau_sigma,
                          tau_e=self.tau_e, max_iters=self.max_iters)


@dataclass
class EnvSection:
    beta: float = 0.8
    horizon: int = 10

    def env_config(self, grow: GrowSection) -> EnvConfig:
        return EnvConfig(beta=self.beta, horizon=self.horizon,
                         grow=grow.grow_config())


@dataclass
class PpoSection:
    lr: float = 1e-3
    gamma: float = 0.99
    clip_eps: float = 0.2
    gae_lambda: float = 0.95
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    batch_size: int = 128
    updates_per_batch: int = 4
    updates: int = 1000
    pool: int = 6
    action_grid: int = 6
    hidden: int = 64
    checkpoint_every: int = 0

    def ppo_config(self) -> PpoConfig:
        return PpoConfig(lr=self.lr, gamma=self.gamma, clip_eps=self.clip_eps,
                         gae_lambda=self.gae_lambda, entropy_coef=self.entropy_coef,
                         value_coef=self.value_coef, batch_size=self.batch_size,
                         updates_per_batch=self.updates_per_batch,
                         total_steps=self.updates * self.batch_size)

    def agent_config(self, log_path=None, checkpoint_dir=None) -> AgentTrainConfig:
        return AgentTrainConfig(updates=self.updates, pool=self.pool,
                                action_grid=self.action_grid, hidden=self.hidden,
                                checkpoint_every=self.checkpoint_every,
                                log_path=log_path, checkpoint_dir=checkpoint_dir)


@dataclass
class EvalSection:
    protocol: str = "in-lesion"
    max_offset: int = 4
    n_prompts: int = 5


@dataclass
class RunConfig:
    rng_seed: int = 0
    phantom: PhantomSection = field(default_factory=PhantomSection)
    surrogate: SurrogateSection = field(default_factory=SurrogateSection)
    grow: GrowSection = field(default_factory=GrowSection)
    env: EnvSection = field(default_factory=EnvSection)
    ppo: PpoSection = field(default_factory=PpoSection)
    eval: EvalSection = field(default_factory=EvalSection)


_SECTIONS = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _apply(obj, data: dict, path: str) -> None:
    names = {f.name: f for f in dataclasses.fields(obj)}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"unknown config key {path}{key!r}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {path}{key!r} must be an object")
            _apply(current, value, f"{path}{key}.")
        else:
            if isinstance(current, bool) and not isinstance(value, bool):
                raise ConfigError(f"config key {path}{key!r} must be a boolean")
            if isinstance(current, int) and not isinstance(current, bool):
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ConfigError(f"config key {path}{key!r} must be a number")
                value = int(value)
            elif isinstance(current, float):
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ConfigError(f"config key {path}{key!r} must be a number")
                value = float(value)
            elif isinstance(current, str) and not isinstance(value, str):
                raise ConfigError(f"config key {path}{key!r} must be a string")
            elif isinstance(current, list) and not isinstance(value, list):
                raise ConfigError(f"config key {path}{key!r} must be a list")
            setattr(obj, key, value)


def load_config(path: str | None = None, overrides: list | None = None) -> RunConfig:
    """Build a RunConfig from defaults, an optional JSON file, and
    `section.key=value` override strings (flags win)."""
    cfg = RunConfig()
    if path:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}")
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        _apply(cfg, data, "")
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        dotted, raw = item.split("=", 1)
        parts = dotted.split(".")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node: dict = {}
        leaf = node
        for p in parts[:-1]:
            leaf[p] = {}
            leaf = leaf[p]
        leaf[parts[-1]] = value
        _apply(cfg, node, "")
    return cfg


def config_to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def dump_config(cfg: RunConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2)
