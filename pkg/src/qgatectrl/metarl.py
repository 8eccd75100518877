"""Two-loop meta-reinforcement-learning controller (metaQctrl).

Outer loop: sample a batch of disturbance tasks, run per-task inner
adaptation, then optimize the global parameters with a clipped surrogate over
the post-adaptation episodes. Inner loop: exactly one vanilla policy-gradient
step from the global parameters on freshly collected episodes. At deployment
the same inner step adapts the trained global policy to the task at hand
before evaluation.

With one task, a degenerate task distribution and inner rate 0, the whole
procedure collapses onto `ppo.ppo_train`'s code path: same collection, same
prepared batches, same 'rollout'/'update' seed streams, same update function.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nnet
from .env import EnvConfig, GateEnv, TaskSpec
from .nnet import AdamState, MlpSpec
from .ppo import ClipUpdateConfig, clipped_update
from .qcore import DisturbanceMode
from .rollout import (
    EpisodeRecord,
    PreparedBatch,
    collect_episodes,
    evaluate_policy,
    prepare_batch,
)
from .seeding import derive_rng


@dataclass(frozen=True)
class TaskDistribution:
    """Independent uniform ranges, one (low, high) pair per disturbance channel."""

    mode: DisturbanceMode
    ranges: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.ranges) != self.mode.n_channels:
            raise ValueError(
                f"{self.mode.value} mode needs {self.mode.n_channels} range(s)"
            )
        for lo, hi in self.ranges:
            if not (0.0 <= lo <= hi <= 1.0):
                raise ValueError(f"range ({lo}, {hi}) is not an interval inside [0, 1]")

    def sample(self, rng: np.random.Generator) -> TaskSpec:
        stds = tuple(float(rng.uniform(lo, hi)) for lo, hi in self.ranges)
        return TaskSpec(self.mode, stds)


def uniform_tasks(mode: DisturbanceMode = DisturbanceMode.COMMON) -> TaskDistribution:
    return TaskDistribution(mode, ((0.0, 1.0),) * mode.n_channels)


def fixed_task_distribution(task: TaskSpec) -> TaskDistribution:
    """Degenerate distribution that always yields `task`."""
    return TaskDistribution(task.mode, tuple((s, s) for s in task.stds))


def sample_tasks(dist: TaskDistribution, k: int, rng: np.random.Generator) -> list[TaskSpec]:
    if k < 1:
        raise ValueError("need at least one task per batch")
    return [dist.sample(rng) for _ in range(k)]


@dataclass(frozen=True)
class MetaConfig:
    task_distribution: TaskDistribution
    tasks_per_iteration: int = 8     # K
    episodes_per_rollout: int = 10   # n, both pre- and post-adaptation
    inner_lr: float = 0.1            # alpha; 0 disables adaptation (PPO reduction)
    meta_lr: float = 3e-4            # beta
    iterations: int = 300            # J
    hidden: tuple[int, ...] = (64, 64)
    log_std_init: float = -1.0
    clip_eps: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    epochs: int = 4
    minibatch_size: int = 64
    entropy_coef: float = 0.003
    value_coef: float = 0.5
    lr_decay: bool = True
    entropy_decay: bool = True
    update_rule: str = "clip"        # "clip" (the algorithm) or "maml" (reference)
    eval_every: int = 25
    eval_etas: tuple[float, ...] = (0.1, 0.5, 0.9)
    eval_episodes: int = 10

    def __post_init__(self):
        if self.tasks_per_iteration < 1 or self.episodes_per_rollout < 1:
            raise ValueError("need at least one task and one episode per rollout")
        if self.inner_lr < 0 or self.meta_lr <= 0:
            raise ValueError("inner_lr must be >= 0 and meta_lr > 0")
        if self.update_rule not in ("clip", "maml"):
            raise ValueError(f"unknown update rule {self.update_rule!r}")

    def update_config(self, progress: float = 0.0) -> ClipUpdateConfig:
        progress = min(max(progress, 0.0), 1.0)
        return ClipUpdateConfig(
            clip_eps=self.clip_eps,
            epochs=self.epochs,
            minibatch_size=self.minibatch_size,
            lr=self.meta_lr * (1.0 - 0.9 * progress) if self.lr_decay else self.meta_lr,
            entropy_coef=self.entropy_coef * (1.0 - progress)
            if self.entropy_decay
            else self.entropy_coef,
            value_coef=self.value_coef,
        )


@dataclass
class TaskTrial:
    """Everything one task contributes to a meta-iteration."""

    task: TaskSpec
    theta_adapted: np.ndarray
    pre_episodes: list[EpisodeRecord]
    post_episodes: list[EpisodeRecord]


@dataclass
class MetaState:
    spec: MlpSpec
    theta: np.ndarray
    adam: AdamState
    config: MetaConfig
    iteration: int = 0


@dataclass
class MetaResult:
    state: MetaState
    theta_best: np.ndarray
    best_eval_fidelity: float
    curve: list[dict] = field(default_factory=list)


def inner_advantages(raw: np.ndarray) -> np.ndarray:
    """Centered advantages, scaled DOWN to unit variance but never amplified.

    Unit-variance normalization would keep the inner step at a constant size
    even once the policy has converged (advantages shrink, the normalizer
    re-inflates them), which measurably damages adapted policies. Capping the
    divisor at 1 tames the early 500-scale success rewards while letting the
    adaptation step vanish as residual advantages do.
    """
    centered = raw - raw.mean()
    return centered / max(1.0, float(centered.std()))


def policy_gradient_ascent(
    spec: MlpSpec,
    theta: np.ndarray,
    episodes: list[EpisodeRecord],
    alpha: float,
    gamma: float,
    lam: float,
) -> np.ndarray:
    """One REINFORCE-with-baseline step:
    theta + alpha * mean_t[ grad log pi(a_t|s_t) * advantage_t ]."""
    if alpha == 0.0:
        return theta.copy()
    batch = prepare_batch(episodes, gamma, lam, normalize=False)
    advantages = inner_advantages(batch.advantages)
    means, acts = nnet.actor_forward(spec, theta, batch.obs)
    log_std = nnet.log_std_of(spec, theta)
    dlogp = advantages / len(batch)
    dmean_lp, dlog_std_lp = nnet.gaussian_logp_grads(means, log_std, batch.actions)
    grad = nnet.actor_backward(
        spec, theta, acts, dlogp[:, None] * dmean_lp, (dlogp[:, None] * dlog_std_lp).sum(axis=0)
    )
    if not np.all(np.isfinite(grad)):
        raise ArithmeticError("non-finite inner policy gradient")
    return theta + alpha * grad


def inner_adapt(
    spec: MlpSpec,
    theta_star: np.ndarray,
    env_config: EnvConfig,
    task: TaskSpec,
    n_episodes: int,
    alpha: float,
    gamma: float,
    lam: float,
    rng: np.random.Generator,
    env: GateEnv | None = None,
) -> tuple[np.ndarray, list[EpisodeRecord]]:
    """Collect episodes under the global policy and take one inner step."""
    env = env if env is not None else GateEnv(env_config)
    episodes = collect_episodes(env, spec, theta_star, task, n_episodes, rng)
    theta_k = policy_gradient_ascent(spec, theta_star, episodes, alpha, gamma, lam)
    return theta_k, episodes


def post_adapt_rollout(
    spec: MlpSpec,
    theta_k: np.ndarray,
    env_config: EnvConfig,
    task: TaskSpec,
    n_episodes: int,
    rng: np.random.Generator,
    env: GateEnv | None = None,
) -> list[EpisodeRecord]:
    """Episodes under the adapted policy; their stored log-probs define pi_old."""
    env = env if env is not None else GateEnv(env_config)
    return collect_episodes(env, spec, theta_k, task, n_episodes, rng)


def _concat_batches(batches: list[PreparedBatch]) -> PreparedBatch:
    return PreparedBatch(
        obs=np.concatenate([b.obs for b in batches]),
        actions=np.concatenate([b.actions for b in batches]),
        logp_old=np.concatenate([b.logp_old for b in batches]),
        advantages=np.concatenate([b.advantages for b in batches]),
        returns=np.concatenate([b.returns for b in batches]),
    )


def meta_update(
    state: MetaState,
    trials: list[TaskTrial],
    config: MetaConfig,
    rng: np.random.Generator,
    progress: float = 0.0,
) -> dict:
    """Optimize the global parameters on the buffered post-adaptation episodes.

    "clip" rule: several epochs of the clipped surrogate, ratios taken against
    the adapted policies that generated the data (advantages normalized per
    task, batches concatenated step-weighted). "maml" rule: one first-order
    step along the averaged post-adaptation policy gradients, kept as a
    reference implementation.
    """
    if not trials:
        raise ValueError("meta_update needs at least one task trial")
    if config.update_rule == "maml":
        ascent = np.zeros_like(state.theta)
        for trial in trials:
            direction = (
                policy_gradient_ascent(
                    state.spec, trial.theta_adapted, trial.post_episodes, 1.0,
                    config.gamma, config.gae_lambda,
                )
                - trial.theta_adapted
            )
            ascent += direction / len(trials)
        state.theta = nnet.adam_step(state.theta, -ascent, state.adam, config.meta_lr)
        stats = {"update_rule": "maml"}
    else:
        batch = _concat_batches(
            [
                prepare_batch(t.post_episodes, config.gamma, config.gae_lambda)
                for t in trials
            ]
        )
        state.theta, stats = clipped_update(
            state.spec, state.theta, state.adam, batch, config.update_config(progress), rng
        )
    if not np.all(np.isfinite(state.theta)):
        raise ArithmeticError("meta update produced non-finite parameters")
    return stats


def deploy_adapt(
    state: MetaState,
    env_config: EnvConfig,
    task: TaskSpec,
    n_episodes: int,
    rng: np.random.Generator,
    n_steps: int = 1,
) -> np.ndarray:
    """Online adaptation at deployment: fresh data, then inner step(s).

    A zero budget (episodes or steps) returns the unadapted global parameters.
    """
    theta = state.theta.copy()
    if n_episodes == 0 or n_steps == 0:
        return theta
    cfg = state.config
    env = GateEnv(env_config)
    for _ in range(n_steps):
        theta, _ = inner_adapt(
            state.spec, theta, env_config, task, n_episodes,
            cfg.inner_lr, cfg.gamma, cfg.gae_lambda, rng, env=env,
        )
    return theta


def _eval_task(config: MetaConfig, eta: float) -> TaskSpec:
    """Held-out evaluation task at a common stddev level for either mode."""
    mode = config.task_distribution.mode
    return TaskSpec(mode, (eta,) * mode.n_channels)


def meta_train(env_config: EnvConfig, config: MetaConfig, seed: int) -> MetaResult:
    """Full outer loop; returns the state plus the best-evaluating snapshot.

    The curve has exactly one row per meta-iteration with columns
    (meta_iter, mean_pre_adapt_return, mean_post_adapt_return,
    eval_fidelity_eta01, eval_fidelity_eta05, eval_fidelity_eta09); evaluation
    columns are NaN on iterations without a held-out evaluation.
    """
    spec = MlpSpec(env_config.obs_dim, env_config.action_dim, config.hidden)
    theta = nnet.init_params(spec, derive_rng(seed, "init"), config.log_std_init)
    state = MetaState(spec=spec, theta=theta, adam=AdamState.zeros(theta.size), config=config)
    result = MetaResult(state=state, theta_best=theta.copy(), best_eval_fidelity=float("nan"))
    env = GateEnv(env_config)

    for j in range(config.iterations):
        tasks = sample_tasks(config.task_distribution, config.tasks_per_iteration,
                             derive_rng(seed, "tasks", j))
        trials = []
        for k, task in enumerate(tasks):
            theta_k, pre = inner_adapt(
                spec, state.theta, env_config, task, config.episodes_per_rollout,
                config.inner_lr, config.gamma, config.gae_lambda,
                derive_rng(seed, "adapt", j, k), env=env,
            )
            post = post_adapt_rollout(
                spec, theta_k, env_config, task, config.episodes_per_rollout,
                derive_rng(seed, "rollout", j, k), env=env,
            )
            trials.append(TaskTrial(task, theta_k, pre, post))

        meta_update(state, trials, config, derive_rng(seed, "update", j),
                    progress=j / config.iterations)
        state.iteration = j + 1

        row = {
            "meta_iter": j,
            "mean_pre_adapt_return": float(
                np.mean([ep.total_return for t in trials for ep in t.pre_episodes])
            ),
            "mean_post_adapt_return": float(
                np.mean([ep.total_return for t in trials for ep in t.post_episodes])
            ),
        }
        eval_cols = {
            eta: f"eval_fidelity_eta{str(eta).replace('.', '')[:2]}" for eta in config.eval_etas
        }
        for name in eval_cols.values():
            row[name] = float("nan")
        if j % config.eval_every == 0 or j == config.iterations - 1:
            fids = []
            for i, eta in enumerate(config.eval_etas):
                task = _eval_task(config, eta)
                adapted = deploy_adapt(
                    state, env_config, task, config.episodes_per_rollout,
                    derive_rng(seed, "eval_adapt", j, i),
                )
                ev = evaluate_policy(
                    env_config, spec, adapted, task, config.eval_episodes,
                    derive_rng(seed, "eval_run", j, i),
                )
                row[eval_cols[eta]] = ev.mean_max_fidelity
                fids.append(ev.mean_max_fidelity)
            mean_eval = float(np.mean(fids))
            if not (mean_eval <= result.best_eval_fidelity):  # NaN-safe first time
                result.best_eval_fidelity = mean_eval
                result.theta_best = state.theta.copy()
        result.curve.append(row)

    if not np.isfinite(result.best_eval_fidelity):
        result.theta_best = state.theta.copy()
    return result
