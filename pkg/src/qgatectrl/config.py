"""Flat key=value run configuration with section prefixes.

Example config file::

    gate=hadamard
    disturbance.mode=common
    env.epsilon=1e-4        # overrides the per-gate default
    ppo.eta=0.3
    sweep.etas=0:1:0.05
    sweep.trials=100

Values stay strings until a typed getter reads them; `--set key=value`
command-line overrides always win over file values.
"""

from __future__ import annotations

import hashlib
from dataclasses import replace
from pathlib import Path

from .bench import GATE_DEFAULTS, GATES, default_env_config
from .env import EnvConfig, TaskSpec
from .grape import GrapeConfig
from .metarl import MetaConfig, TaskDistribution, uniform_tasks
from .ppo import PpoConfig
from .qcore import DisturbanceMode


class ConfigError(Exception):
    """Malformed or inconsistent run configuration."""


class MissingArtifactError(Exception):
    """A required input artifact (pulse file, checkpoint) does not exist."""


class Config:
    def __init__(self, values: dict[str, str] | None = None):
        self.values: dict[str, str] = dict(values or {})

    @classmethod
    def from_file(cls, path: str | Path) -> "Config":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        return cls(parse_config_text(text))

    def apply_overrides(self, overrides: list[str]) -> None:
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not of the form key=value")
            key, value = item.split("=", 1)
            self.values[key.strip()] = value.strip()

    def get(self, key: str, default: str | None = None) -> str | None:
        return self.values.get(key, default)

    def get_str(self, key: str, default: str) -> str:
        return self.values.get(key, default)

    def get_float(self, key: str, default: float) -> float:
        raw = self.values.get(key)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}={raw!r} is not a number") from exc

    def get_int(self, key: str, default: int) -> int:
        raw = self.values.get(key)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}={raw!r} is not an integer") from exc

    def get_bool(self, key: str, default: bool) -> bool:
        raw = self.values.get(key)
        if raw is None:
            return default
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}={raw!r} is not a boolean")

    def effective_text(self) -> str:
        return "\n".join(f"{k}={v}" for k, v in sorted(self.values.items())) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.effective_text().encode()).hexdigest()[:12]


def parse_config_text(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def parse_eta_grid(spec: str) -> tuple[float, ...]:
    """Either `start:stop:step` (inclusive) or a comma-separated list."""
    spec = spec.strip()
    try:
        if ":" in spec:
            start_s, stop_s, step_s = spec.split(":")
            start, stop, step = float(start_s), float(stop_s), float(step_s)
            if step <= 0 or stop < start:
                raise ValueError
            etas, value = [], start
            while value <= stop + step / 2:
                etas.append(round(value, 10))
                value += step
            return tuple(etas)
        return tuple(float(tok) for tok in spec.split(",") if tok.strip())
    except ValueError as exc:
        raise ConfigError(f"bad eta grid {spec!r}") from exc


def disturbance_mode(cfg: Config) -> DisturbanceMode:
    raw = cfg.get_str("disturbance.mode", "common")
    if raw in ("common", "single"):
        return DisturbanceMode.COMMON
    if raw in ("dual", "drift_and_control"):
        return DisturbanceMode.DRIFT_AND_CONTROL
    raise ConfigError(f"disturbance.mode={raw!r}; expected common or dual")


def build_env_config(cfg: Config) -> tuple[str, EnvConfig]:
    gate = cfg.get_str("gate", "hadamard")
    if gate not in GATES:
        raise ConfigError(f"gate={gate!r}; expected one of {GATES}")
    mode = disturbance_mode(cfg)
    env = default_env_config(gate, mode)
    _, horizon_default, steps_default, eps_default = GATE_DEFAULTS[gate]
    try:
        env = replace(
            env,
            horizon=cfg.get_float("env.T", horizon_default),
            max_steps=cfg.get_int("env.N", steps_default),
            epsilon=cfg.get_float("env.epsilon", eps_default),
            u_min=cfg.get_float("env.u_min", env.u_min),
            u_max=cfg.get_float("env.u_max", env.u_max),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return gate, env


def build_grape_config(cfg: Config, section: str) -> GrapeConfig:
    try:
        return GrapeConfig(
            iterations=cfg.get_int(f"{section}.iterations", 500),
            learning_rate=cfg.get_float(f"{section}.lr", 0.2),
            fidelity_tol=cfg.get_float(f"{section}.fidelity_tol", 1.0 - 1e-6),
            fd_step=cfg.get_float(f"{section}.fd_step", 1e-4),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _train_task(cfg: Config, mode: DisturbanceMode, section: str) -> TaskSpec:
    if mode is DisturbanceMode.COMMON:
        return TaskSpec(mode, (cfg.get_float(f"{section}.eta", 0.3),))
    return TaskSpec(
        mode,
        (cfg.get_float(f"{section}.eta0", 0.3), cfg.get_float(f"{section}.etau", 0.3)),
    )


def build_ppo_config(cfg: Config, mode: DisturbanceMode) -> PpoConfig:
    defaults = PpoConfig(train_task=_train_task(cfg, mode, "ppo"))
    try:
        return replace(
            defaults,
            clip_eps=cfg.get_float("ppo.clip_eps", defaults.clip_eps),
            gamma=cfg.get_float("ppo.gamma", defaults.gamma),
            gae_lambda=cfg.get_float("ppo.gae_lambda", defaults.gae_lambda),
            epochs=cfg.get_int("ppo.epochs", defaults.epochs),
            minibatch_size=cfg.get_int("ppo.minibatch_size", defaults.minibatch_size),
            lr=cfg.get_float("ppo.lr", defaults.lr),
            entropy_coef=cfg.get_float("ppo.entropy_coef", defaults.entropy_coef),
            value_coef=cfg.get_float("ppo.value_coef", defaults.value_coef),
            rollout_steps=cfg.get_int("ppo.rollout_steps", defaults.rollout_steps),
            total_steps=cfg.get_int("ppo.total_steps", defaults.total_steps),
            lr_decay=cfg.get_bool("ppo.lr_decay", defaults.lr_decay),
            entropy_decay=cfg.get_bool("ppo.entropy_decay", defaults.entropy_decay),
            log_std_init=cfg.get_float("ppo.log_std_init", defaults.log_std_init),
            eval_every=cfg.get_int("ppo.eval_every", defaults.eval_every),
            eval_episodes=cfg.get_int("ppo.eval_episodes", defaults.eval_episodes),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_meta_config(cfg: Config, mode: DisturbanceMode) -> MetaConfig:
    lo = cfg.get_float("meta.eta_min", 0.0)
    hi = cfg.get_float("meta.eta_max", 1.0)
    try:
        dist = TaskDistribution(mode, ((lo, hi),) * mode.n_channels)
        defaults = MetaConfig(task_distribution=dist)
        return replace(
            defaults,
            tasks_per_iteration=cfg.get_int("meta.K", defaults.tasks_per_iteration),
            episodes_per_rollout=cfg.get_int("meta.n_episodes", defaults.episodes_per_rollout),
            inner_lr=cfg.get_float("meta.alpha", defaults.inner_lr),
            meta_lr=cfg.get_float("meta.beta", defaults.meta_lr),
            iterations=cfg.get_int("meta.iterations", defaults.iterations),
            clip_eps=cfg.get_float("meta.clip_eps", defaults.clip_eps),
            gamma=cfg.get_float("meta.gamma", defaults.gamma),
            gae_lambda=cfg.get_float("meta.gae_lambda", defaults.gae_lambda),
            epochs=cfg.get_int("meta.epochs", defaults.epochs),
            minibatch_size=cfg.get_int("meta.minibatch_size", defaults.minibatch_size),
            entropy_coef=cfg.get_float("meta.entropy_coef", defaults.entropy_coef),
            value_coef=cfg.get_float("meta.value_coef", defaults.value_coef),
            lr_decay=cfg.get_bool("meta.lr_decay", defaults.lr_decay),
            entropy_decay=cfg.get_bool("meta.entropy_decay", defaults.entropy_decay),
            log_std_init=cfg.get_float("meta.log_std_init", defaults.log_std_init),
            update_rule=cfg.get_str("meta.update_rule", defaults.update_rule),
            eval_every=cfg.get_int("meta.eval_every", defaults.eval_every),
            eval_episodes=cfg.get_int("meta.eval_episodes", defaults.eval_episodes),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
