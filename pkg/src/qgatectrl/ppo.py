"""Clipped-surrogate actor-critic (PPO) for a fixed disturbance task.

The loss and the epoch/minibatch update here are also the meta controller's
outer update: both call `clipped_loss_and_grad` / `clipped_update` on prepared
batches, which is what makes the single-task reduction of the meta algorithm
bit-identical to PPO under shared seed streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import nnet
from .env import EnvConfig, GateEnv, TaskSpec
from .nnet import AdamState, MlpSpec
from .rollout import (
    EvalStats,
    PreparedBatch,
    collect_episodes,
    collect_steps,
    evaluate_policy,
    prepare_batch,
)
from .seeding import derive_rng


@dataclass(frozen=True)
class ClipUpdateConfig:
    """Knobs of one clipped-surrogate optimization pass over a batch."""

    clip_eps: float = 0.2
    epochs: int = 4
    minibatch_size: int = 64
    lr: float = 3e-4
    entropy_coef: float = 0.01
    value_coef: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.clip_eps < 1.0:
            raise ValueError("clip_eps must lie in (0, 1)")


@dataclass(frozen=True)
class PpoConfig:
    train_task: TaskSpec
    hidden: tuple[int, ...] = (64, 64)
    log_std_init: float = -1.0
    clip_eps: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    epochs: int = 4
    minibatch_size: int = 64
    lr: float = 3e-4
    entropy_coef: float = 0.003
    value_coef: float = 0.5
    rollout_steps: int = 2048
    episodes_per_batch: int | None = None  # when set, overrides rollout_steps
    total_steps: int = 800_000
    max_iterations: int | None = None      # optional hard cap on update rounds
    lr_decay: bool = True        # linear anneal of lr to 10% over total_steps
    entropy_decay: bool = True   # linear anneal of the entropy bonus to 0
    eval_every: int = 5    # iterations between deterministic evaluations
    eval_episodes: int = 10
    early_stop_on_success: bool = False

    def __post_init__(self):
        if not 0.0 < self.clip_eps < 1.0:
            raise ValueError("clip_eps must lie in (0, 1)")
        if not (0.0 < self.gamma <= 1.0 and 0.0 < self.gae_lambda <= 1.0):
            raise ValueError("gamma and gae_lambda must lie in (0, 1]")

    def update_config(self, progress: float = 0.0) -> ClipUpdateConfig:
        """Effective update knobs at a training progress fraction in [0, 1]."""
        progress = min(max(progress, 0.0), 1.0)
        return ClipUpdateConfig(
            clip_eps=self.clip_eps,
            epochs=self.epochs,
            minibatch_size=self.minibatch_size,
            lr=self.lr * (1.0 - 0.9 * progress) if self.lr_decay else self.lr,
            entropy_coef=self.entropy_coef * (1.0 - progress)
            if self.entropy_decay
            else self.entropy_coef,
            value_coef=self.value_coef,
        )


def clipped_loss_and_grad(
    spec: MlpSpec,
    theta: np.ndarray,
    batch: PreparedBatch,
    cfg: ClipUpdateConfig,
    return_terms: bool = False,
):
    """Loss = -surrogate + c_v * value MSE - c_H * entropy, with its exact gradient.

    The per-step surrogate term is min(c_t * adv, clip(c_t, 1-eps, 1+eps) * adv)
    with c_t the ratio of the candidate policy to the collection policy.
    """
    n = len(batch)
    means, actor_acts = nnet.actor_forward(spec, theta, batch.obs)
    log_std = nnet.log_std_of(spec, theta)
    logp = nnet.gaussian_logp(means, log_std, batch.actions)
    ratio = np.exp(logp - batch.logp_old)
    unclipped = ratio * batch.advantages
    clipped = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * batch.advantages
    take_unclipped = unclipped <= clipped
    terms = np.where(take_unclipped, unclipped, clipped)
    surrogate = terms.mean()

    values, critic_acts = nnet.critic_forward(spec, theta, batch.obs)
    value_err = values - batch.returns
    value_loss = float(np.mean(value_err**2))
    entropy = nnet.gaussian_entropy(log_std)
    loss = -surrogate + cfg.value_coef * value_loss - cfg.entropy_coef * entropy
    if not math.isfinite(loss):
        raise ArithmeticError(
            f"non-finite loss (surrogate={surrogate}, value={value_loss}, entropy={entropy})"
        )

    # d loss / d logp: only the branch actually selected by the min carries
    # gradient, and the clipped branch is constant in theta when it binds.
    dlogp = np.where(take_unclipped, ratio * batch.advantages, 0.0) * (-1.0 / n)
    dmean_lp, dlog_std_lp = nnet.gaussian_logp_grads(means, log_std, batch.actions)
    dmeans = dlogp[:, None] * dmean_lp
    dlog_std = (dlogp[:, None] * dlog_std_lp).sum(axis=0) - cfg.entropy_coef
    grad = nnet.actor_backward(spec, theta, actor_acts, dmeans, dlog_std)
    dvalues = (2.0 * cfg.value_coef / n) * value_err
    nnet.critic_backward(spec, theta, critic_acts, dvalues, out=grad)

    stats = {
        "loss": float(loss),
        "surrogate": float(surrogate),
        "value_loss": value_loss,
        "entropy": entropy,
        "clip_fraction": float(np.mean(~take_unclipped)),
    }
    if return_terms:
        stats["terms"] = terms
        stats["ratio"] = ratio
    return loss, grad, stats


def clipped_update(
    spec: MlpSpec,
    theta: np.ndarray,
    adam: AdamState,
    batch: PreparedBatch,
    cfg: ClipUpdateConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, dict]:
    """Several epochs of minibatched ascent on the clipped surrogate."""
    n = len(batch)
    last_stats: dict = {}
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.minibatch_size):
            idx = perm[start : start + cfg.minibatch_size]
            mini = PreparedBatch(
                obs=batch.obs[idx],
                actions=batch.actions[idx],
                logp_old=batch.logp_old[idx],
                advantages=batch.advantages[idx],
                returns=batch.returns[idx],
            )
            _, grad, last_stats = clipped_loss_and_grad(spec, theta, mini, cfg)
            theta = nnet.adam_step(theta, grad, adam, cfg.lr)
    return theta, last_stats


@dataclass
class TrainResult:
    spec: MlpSpec
    theta: np.ndarray                 # final parameters
    theta_best: np.ndarray            # best by deterministic evaluation fidelity
    adam: AdamState
    curve: list[dict] = field(default_factory=list)
    env_steps: int = 0
    first_success_step: int | None = None
    best_eval_fidelity: float = float("nan")


def ppo_train(env_config: EnvConfig, config: PpoConfig, seed: int) -> TrainResult:
    """Train on one fixed task; returns the best-evaluating parameters.

    All randomness derives from `seed` through named streams, one per
    (phase, iteration), so runs are reproducible bit-for-bit.
    """
    spec = MlpSpec(env_config.obs_dim, env_config.action_dim, config.hidden)
    theta = nnet.init_params(spec, derive_rng(seed, "init"), config.log_std_init)
    adam = AdamState.zeros(theta.size)
    env = GateEnv(env_config)
    task = config.train_task

    result = TrainResult(spec=spec, theta=theta, theta_best=theta.copy(), adam=adam)
    iteration = 0
    while result.env_steps < config.total_steps and (
        config.max_iterations is None or iteration < config.max_iterations
    ):
        update_cfg = config.update_config(result.env_steps / config.total_steps)
        roll_rng = derive_rng(seed, "rollout", iteration, 0)
        if config.episodes_per_batch is not None:
            episodes = collect_episodes(env, spec, theta, task, config.episodes_per_batch, roll_rng)
        else:
            episodes = collect_steps(env, spec, theta, task, config.rollout_steps, roll_rng)
        steps_so_far = result.env_steps
        for ep in episodes:
            steps_so_far += len(ep)
            if ep.terminated and result.first_success_step is None:
                result.first_success_step = steps_so_far
        result.env_steps = steps_so_far

        batch = prepare_batch(episodes, config.gamma, config.gae_lambda)
        theta, stats = clipped_update(
            spec, theta, adam, batch, update_cfg, derive_rng(seed, "update", iteration)
        )

        row = {
            "iteration": iteration,
            "env_steps": result.env_steps,
            "mean_return": float(np.mean([ep.total_return for ep in episodes])),
            "mean_max_fidelity": float(np.mean([ep.max_fidelity for ep in episodes])),
            "eval_mean_max_fidelity": float("nan"),
        }
        if iteration % config.eval_every == 0:
            ev = evaluate_policy(
                env_config, spec, theta, task, config.eval_episodes, derive_rng(seed, "eval", iteration)
            )
            row["eval_mean_max_fidelity"] = ev.mean_max_fidelity
            if not (ev.mean_max_fidelity <= result.best_eval_fidelity):  # NaN-safe
                result.best_eval_fidelity = ev.mean_max_fidelity
                result.theta_best = theta.copy()
        result.curve.append(row)
        iteration += 1
        if config.early_stop_on_success and result.first_success_step is not None:
            break

    result.theta = theta
    if not np.isfinite(result.best_eval_fidelity):
        result.theta_best = theta.copy()
    return result


def ppo_evaluate(
    spec: MlpSpec,
    theta: np.ndarray,
    env_config: EnvConfig,
    task: TaskSpec,
    n_trials: int,
    rng: np.random.Generator,
) -> EvalStats:
    """Closed-loop Monte Carlo evaluation with the deterministic policy mean."""
    return evaluate_policy(env_config, spec, theta, task, n_trials, rng)
