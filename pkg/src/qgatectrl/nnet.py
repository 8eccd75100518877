"""Minimal feed-forward network stack with hand-written reverse-mode gradients.

Two independent tanh MLP trunks (actor mean head and critic value head) plus a
state-independent per-dimension log-stddev live in ONE flat float64 parameter
vector. Everything is a pure function of (spec, theta, inputs), which keeps
training bit-reproducible and makes finite-difference gradient checks trivial.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

CHECKPOINT_VERSION = 1
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class MlpSpec:
    """Architecture metadata: tanh hidden layers, identity outputs."""

    obs_dim: int
    act_dim: int
    hidden: tuple[int, ...] = (64, 64)

    def __post_init__(self):
        if self.obs_dim < 1 or self.act_dim < 1 or any(h < 1 for h in self.hidden):
            raise ValueError("all layer sizes must be positive")

    @property
    def actor_sizes(self) -> tuple[int, ...]:
        return (self.obs_dim, *self.hidden, self.act_dim)

    @property
    def critic_sizes(self) -> tuple[int, ...]:
        return (self.obs_dim, *self.hidden, 1)


def _trunk_param_count(sizes: tuple[int, ...]) -> int:
    return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


@lru_cache(maxsize=None)
def _layout(spec: MlpSpec) -> tuple[int, int, int]:
    """(actor_end, critic_end, total) offsets into the flat vector."""
    a = _trunk_param_count(spec.actor_sizes)
    c = _trunk_param_count(spec.critic_sizes)
    return a, a + c, a + c + spec.act_dim


def n_params(spec: MlpSpec) -> int:
    return _layout(spec)[2]


def _split_trunk(sizes: tuple[int, ...], flat: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    layers, pos = [], 0
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        w = flat[pos : pos + n_in * n_out].reshape(n_in, n_out)
        pos += n_in * n_out
        b = flat[pos : pos + n_out]
        pos += n_out
        layers.append((w, b))
    return layers


def split_params(
    spec: MlpSpec, theta: np.ndarray
) -> tuple[list[tuple[np.ndarray, np.ndarray]], list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Views (actor_layers, critic_layers, log_std) into the flat vector."""
    a_end, c_end, total = _layout(spec)
    if theta.shape != (total,):
        raise ValueError(f"parameter vector has shape {theta.shape}, expected ({total},)")
    actor = _split_trunk(spec.actor_sizes, theta[:a_end])
    critic = _split_trunk(spec.critic_sizes, theta[a_end:c_end])
    return actor, critic, theta[c_end:]


def log_std_of(spec: MlpSpec, theta: np.ndarray) -> np.ndarray:
    return split_params(spec, theta)[2]


def _orthogonal(rng: np.random.Generator, n_in: int, n_out: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((max(n_in, n_out), min(n_in, n_out)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if n_in < n_out:
        q = q.T
    return gain * q


def init_params(spec: MlpSpec, rng: np.random.Generator, log_std_init: float = 0.0) -> np.ndarray:
    """Orthogonal hidden layers; near-zero final policy layer so initial
    actions sit well inside the actuator bounds."""
    theta = np.zeros(n_params(spec))
    actor, critic, log_std = split_params(spec, theta)
    for layers, final_gain in ((actor, 0.01), (critic, 1.0)):
        for i, (w, b) in enumerate(layers):
            gain = final_gain if i == len(layers) - 1 else np.sqrt(2.0)
            w[:] = _orthogonal(rng, *w.shape, gain)
            b[:] = 0.0
    log_std[:] = log_std_init
    return theta


def _mlp_forward(layers, x: np.ndarray):
    """Returns output and the per-layer activations needed for backward."""
    acts = [x]
    for i, (w, b) in enumerate(layers):
        z = x @ w + b
        x = z if i == len(layers) - 1 else np.tanh(z)
        acts.append(x)
    return x, acts


def _mlp_backward(layers, acts, dout: np.ndarray, grad_flat: np.ndarray) -> None:
    """Accumulate dLoss/d(layer params) into grad_flat (same layout as the trunk)."""
    pos = len(grad_flat)
    da = dout
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        if i < len(layers) - 1:  # undo tanh: act = tanh(z), d tanh = 1 - act**2
            da = da * (1.0 - acts[i + 1] ** 2)
        n_in, n_out = w.shape
        pos -= n_out
        grad_flat[pos : pos + n_out] += da.sum(axis=0)
        pos -= n_in * n_out
        grad_flat[pos : pos + n_in * n_out] += (acts[i].T @ da).ravel()
        if i > 0:
            da = da @ w.T
    assert pos == 0


def actor_forward(spec: MlpSpec, theta: np.ndarray, obs: np.ndarray):
    actor, _, _ = split_params(spec, theta)
    means, acts = _mlp_forward(actor, np.atleast_2d(obs))
    return means, acts


def critic_forward(spec: MlpSpec, theta: np.ndarray, obs: np.ndarray):
    _, critic, _ = split_params(spec, theta)
    values, acts = _mlp_forward(critic, np.atleast_2d(obs))
    return values[:, 0], acts


def actor_backward(
    spec: MlpSpec,
    theta: np.ndarray,
    acts,
    dmeans: np.ndarray,
    dlog_std: np.ndarray | None = None,
    out: np.ndarray | None = None,
) -> np.ndarray:
    """Gradient of a scalar loss given dLoss/dmeans (and optionally dLoss/dlog_std)."""
    a_end, c_end, total = _layout(spec)
    grad = out if out is not None else np.zeros(total)
    actor, _, _ = split_params(spec, theta)
    _mlp_backward(actor, acts, dmeans, grad[:a_end])
    if dlog_std is not None:
        grad[c_end:] += dlog_std
    return grad


def critic_backward(
    spec: MlpSpec, theta: np.ndarray, acts, dvalues: np.ndarray, out: np.ndarray | None = None
) -> np.ndarray:
    a_end, c_end, total = _layout(spec)
    grad = out if out is not None else np.zeros(total)
    _, critic, _ = split_params(spec, theta)
    _mlp_backward(critic, acts, dvalues[:, None], grad[a_end:c_end])
    return grad


def forward(spec: MlpSpec, theta: np.ndarray, obs: np.ndarray) -> tuple[np.ndarray, float]:
    """Deterministic (action_mean, value) for a single observation."""
    obs = np.asarray(obs, dtype=float)
    if obs.shape != (spec.obs_dim,):
        raise ValueError(f"observation shape {obs.shape} != ({spec.obs_dim},)")
    means, _ = actor_forward(spec, theta, obs)
    values, _ = critic_forward(spec, theta, obs)
    return means[0], float(values[0])


class FrozenPolicy:
    """Pre-split read-only view of one parameter vector for rollout loops.

    Splitting the flat vector costs more than the tiny batch-1 matmuls, so
    rollouts split once per episode batch instead of once per step. Same math
    as `forward`, same results.
    """

    def __init__(self, spec: MlpSpec, theta: np.ndarray):
        self.spec = spec
        self.theta = theta
        self.actor, self.critic, self.log_std = split_params(spec, theta)

    def forward(self, obs: np.ndarray) -> tuple[np.ndarray, float]:
        means, _ = _mlp_forward(self.actor, obs[None, :])
        values, _ = _mlp_forward(self.critic, obs[None, :])
        return means[0], float(values[0, 0])


# ---------------------------------------------------------------------------
# diagonal Gaussian policy head
# ---------------------------------------------------------------------------

def gaussian_logp(means: np.ndarray, log_std: np.ndarray, actions: np.ndarray) -> np.ndarray:
    z = (actions - means) * np.exp(-log_std)
    return -0.5 * np.sum(z**2, axis=-1) - np.sum(log_std) - 0.5 * means.shape[-1] * LOG_2PI


def gaussian_logp_grads(means: np.ndarray, log_std: np.ndarray, actions: np.ndarray):
    """(d logp / d mean, d logp / d log_std), each shaped like `means`."""
    inv_var = np.exp(-2.0 * log_std)
    diff = actions - means
    dmean = diff * inv_var
    dlog_std = diff**2 * inv_var - 1.0
    return dmean, dlog_std


def gaussian_sample(mean: np.ndarray, log_std: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return mean + np.exp(log_std) * rng.standard_normal(mean.shape)


def gaussian_entropy(log_std: np.ndarray) -> float:
    return float(np.sum(log_std) + 0.5 * log_std.shape[-1] * (1.0 + LOG_2PI))


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n), step=0)


def adam_step(
    theta: np.ndarray,
    grad: np.ndarray,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> np.ndarray:
    """One bias-corrected minimization step; mutates `state`, returns new theta."""
    if not np.all(np.isfinite(grad)):
        raise ArithmeticError("non-finite gradient passed to adam_step")
    state.step += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grad
    state.v = beta2 * state.v + (1.0 - beta2) * grad**2
    m_hat = state.m / (1.0 - beta1**state.step)
    v_hat = state.v / (1.0 - beta2**state.step)
    return theta - lr * m_hat / (np.sqrt(v_hat) + eps)


# ---------------------------------------------------------------------------
# oracle and checkpoint IO
# ---------------------------------------------------------------------------

def numerical_gradient(loss_fn, theta: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar loss; test oracle, O(n) evals."""
    grad = np.zeros_like(theta)
    probe = theta.copy()
    for i in range(theta.size):
        probe[i] = theta[i] + h
        up = loss_fn(probe)
        probe[i] = theta[i] - h
        down = loss_fn(probe)
        probe[i] = theta[i]
        grad[i] = (up - down) / (2.0 * h)
    return grad


@dataclass
class Checkpoint:
    spec: MlpSpec
    theta: np.ndarray
    adam: AdamState | None = None
    extra: dict = field(default_factory=dict)


def save_checkpoint(
    path: str | Path,
    spec: MlpSpec,
    theta: np.ndarray,
    adam: AdamState | None = None,
    extra: dict | None = None,
) -> None:
    """Portable text container; floats serialize via repr so loading is exact."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "spec": {"obs_dim": spec.obs_dim, "act_dim": spec.act_dim, "hidden": list(spec.hidden)},
        "theta": theta.tolist(),
        "adam": None
        if adam is None
        else {"m": adam.m.tolist(), "v": adam.v.tolist(), "step": adam.step},
        "extra": extra or {},
    }
    Path(path).write_text(json.dumps(payload))


def load_checkpoint(path: str | Path) -> Checkpoint:
    payload = json.loads(Path(path).read_text())
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')!r}")
    spec = MlpSpec(
        obs_dim=int(payload["spec"]["obs_dim"]),
        act_dim=int(payload["spec"]["act_dim"]),
        hidden=tuple(int(h) for h in payload["spec"]["hidden"]),
    )
    theta = np.asarray(payload["theta"], dtype=float)
    adam = None
    if payload["adam"] is not None:
        adam = AdamState(
            m=np.asarray(payload["adam"]["m"], dtype=float),
            v=np.asarray(payload["adam"]["v"], dtype=float),
            step=int(payload["adam"]["step"]),
        )
    return Checkpoint(spec=spec, theta=theta, adam=adam, extra=payload["extra"])
