"""Episodic gate-control environment.

One episode drives the running unitary from U(0) = I toward a target gate in
at most N piecewise-constant control steps. The observation is the flattened
real and imaginary parts of U(t); the reward is a piecewise function of the
gate fidelity with a (1 - t/T) decay that pays early success more. An episode
terminates on success (F > 1 - epsilon) and truncates when the step budget is
exhausted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qcore import (
    DisturbanceMode,
    DisturbanceSpec,
    SystemModel,
    build_hamiltonian,
    gate_fidelity,
    is_unitary,
    propagator,
    sample_disturbances,
)


@dataclass(frozen=True)
class TaskSpec:
    """One disturbance setting (a task drawn from the task distribution)."""

    mode: DisturbanceMode
    stds: tuple[float, ...]

    def __post_init__(self):
        if len(self.stds) != self.mode.n_channels:
            raise ValueError(
                f"{self.mode.value} mode needs {self.mode.n_channels} stddev(s), "
                f"got {len(self.stds)}"
            )
        for eta in self.stds:
            if not 0.0 <= eta <= 1.0:
                raise ValueError(f"stddev {eta} outside [0, 1]")

    def disturbance(self) -> DisturbanceSpec:
        return DisturbanceSpec(self.stds)


def common_task(eta: float) -> TaskSpec:
    return TaskSpec(DisturbanceMode.COMMON, (eta,))


def dual_task(eta0: float, eta_u: float) -> TaskSpec:
    return TaskSpec(DisturbanceMode.DRIFT_AND_CONTROL, (eta0, eta_u))


@dataclass(frozen=True)
class EnvConfig:
    model: SystemModel
    target_gate: np.ndarray
    horizon: float
    max_steps: int
    epsilon: float
    disturbance: DisturbanceSpec
    u_min: float = -5.0
    u_max: float = 5.0

    def __post_init__(self):
        if self.max_steps < 1 or self.horizon <= 0:
            raise ValueError("need horizon > 0 and max_steps >= 1")
        # keeps the reward branches ordered: 1 - epsilon > 0.98
        if not 0.0 < self.epsilon < 0.02:
            raise ValueError(f"epsilon must lie in (0, 0.02), got {self.epsilon}")
        if self.u_min >= self.u_max:
            raise ValueError("u_min must be below u_max")
        dim = self.model.dim
        if self.target_gate.shape != (dim, dim) or not is_unitary(self.target_gate):
            raise ValueError("target_gate must be a unitary matching the model dimension")
        if self.disturbance.n_channels != self.model.mode.n_channels:
            raise ValueError("disturbance channel count does not match the model mode")

    @property
    def dt(self) -> float:
        return self.horizon / self.max_steps

    @property
    def obs_dim(self) -> int:
        return 2 * self.model.dim**2

    @property
    def action_dim(self) -> int:
        return self.model.n_controls

    def default_task(self) -> TaskSpec:
        return TaskSpec(self.model.mode, self.disturbance.stds)


@dataclass(frozen=True)
class StepResult:
    observation: np.ndarray
    reward: float
    fidelity: float
    terminated: bool
    truncated: bool
    step_index: int

    @property
    def done(self) -> bool:
        return self.terminated or self.truncated


def reward_fn(fidelity: float, t: float, horizon: float, epsilon: float) -> float:
    """Piecewise fidelity reward with a (1 - t/T) early-success bonus.

    F > 1-eps: 500(1-t/T); 0.98 < F <= 1-eps: 10(1-t/T);
    0.9 < F <= 0.98: (1-t/T); F <= 0.9: -(1-F).
    """
    decay = 1.0 - t / horizon
    if fidelity > 1.0 - epsilon:
        return 500.0 * decay
    if fidelity > 0.98:
        return 10.0 * decay
    if fidelity > 0.9:
        return decay
    return -(1.0 - fidelity)


def encode_observation(u: np.ndarray) -> np.ndarray:
    """Row-major real parts of U, then row-major imaginary parts."""
    return np.concatenate([u.real.ravel(), u.imag.ravel()])


def decode_observation(obs: np.ndarray) -> np.ndarray:
    half = obs.shape[0] // 2
    dim = int(round(half**0.5))
    return (obs[:half] + 1j * obs[half:]).reshape(dim, dim)


class GateEnv:
    """Single-owner mutable episode state; one instance per concurrent worker."""

    def __init__(self, config: EnvConfig):
        self.config = config
        self._u = np.eye(config.model.dim, dtype=np.complex128)
        self._task = config.default_task()
        self._step_index = 0
        self._finished = True

    @property
    def unitary(self) -> np.ndarray:
        return self._u.copy()

    @property
    def step_index(self) -> int:
        return self._step_index

    def reset(self, task: TaskSpec | None = None, rng: np.random.Generator | None = None) -> np.ndarray:
        """Start a new episode at U(0) = I and return its observation.

        `rng` is accepted for interface symmetry with step(); the reset itself
        is deterministic.
        """
        del rng
        task = task if task is not None else self.config.default_task()
        if task.mode is not self.config.model.mode:
            raise ValueError(
                f"task mode {task.mode.value} does not match model mode "
                f"{self.config.model.mode.value}"
            )
        self._task = task
        self._u = np.eye(self.config.model.dim, dtype=np.complex128)
        self._step_index = 0
        self._finished = False
        return encode_observation(self._u)

    def step(self, action: np.ndarray, rng: np.random.Generator) -> StepResult:
        """Apply one clamped control step under freshly sampled disturbances."""
        if self._finished:
            raise RuntimeError("step() called on a finished episode; call reset() first")
        cfg = self.config
        action = np.clip(np.asarray(action, dtype=float), cfg.u_min, cfg.u_max)
        mu = sample_disturbances(self._task.disturbance(), rng)
        h = build_hamiltonian(cfg.model, action, mu)
        self._u = propagator(h, cfg.dt) @ self._u
        self._step_index += 1

        fidelity = gate_fidelity(self._u, cfg.target_gate, cfg.model.n_qubits)
        t = self._step_index * cfg.dt
        reward = reward_fn(fidelity, t, cfg.horizon, cfg.epsilon)
        terminated = fidelity > 1.0 - cfg.epsilon
        truncated = not terminated and self._step_index >= cfg.max_steps
        self._finished = terminated or truncated
        return StepResult(
            observation=encode_observation(self._u),
            reward=reward,
            fidelity=fidelity,
            terminated=terminated,
            truncated=truncated,
            step_index=self._step_index,
        )
