"""Episode collection, advantage estimation, and evaluation statistics.

Shared plumbing for PPO, the meta controller, and Monte Carlo evaluation of
fixed pulse schedules. Episodes store the PRE-clamp sampled actions together
with their log-probabilities, so that importance ratios can be recomputed
exactly; the environment clamps internally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nnet
from .env import EnvConfig, GateEnv, TaskSpec
from .nnet import MlpSpec


@dataclass
class EpisodeRecord:
    """One rollout: per-step (obs, action, logp, reward, value, fidelity)."""

    obs: np.ndarray          # (T, obs_dim) observation before each action
    actions: np.ndarray      # (T, act_dim) pre-clamp samples
    logps: np.ndarray        # (T,) log pi(a_t | s_t) at collection time
    rewards: np.ndarray      # (T,)
    values: np.ndarray       # (T,) critic value of obs[t] at collection time
    fidelities: np.ndarray   # (T,) gate fidelity after each step
    final_obs: np.ndarray    # observation after the last step
    final_value: float       # critic value of final_obs (bootstrap on truncation)
    terminated: bool
    truncated: bool

    def __len__(self) -> int:
        return self.rewards.shape[0]

    @property
    def total_return(self) -> float:
        return float(self.rewards.sum())

    @property
    def max_fidelity(self) -> float:
        return float(self.fidelities.max())

    @property
    def steps_to_max(self) -> int:
        """1-based step index at which the trajectory fidelity peaked."""
        return int(self.fidelities.argmax()) + 1


def collect_episode(
    env: GateEnv,
    spec: MlpSpec,
    theta: np.ndarray,
    task: TaskSpec,
    rng: np.random.Generator,
    deterministic: bool = False,
) -> EpisodeRecord:
    obs = env.reset(task)
    obs_l, act_l, logp_l, rew_l, val_l, fid_l = [], [], [], [], [], []
    policy = nnet.FrozenPolicy(spec, theta)
    log_std = policy.log_std
    terminated = truncated = False
    while not (terminated or truncated):
        mean, value = policy.forward(obs)
        action = mean if deterministic else nnet.gaussian_sample(mean, log_std, rng)
        logp = float(nnet.gaussian_logp(mean, log_std, action))
        obs_l.append(obs)
        act_l.append(action)
        logp_l.append(logp)
        val_l.append(value)
        result = env.step(action, rng)
        rew_l.append(result.reward)
        fid_l.append(result.fidelity)
        obs = result.observation
        terminated, truncated = result.terminated, result.truncated
    final_value = 0.0 if terminated else policy.forward(obs)[1]
    return EpisodeRecord(
        obs=np.array(obs_l),
        actions=np.array(act_l),
        logps=np.array(logp_l),
        rewards=np.array(rew_l),
        values=np.array(val_l),
        fidelities=np.array(fid_l),
        final_obs=obs,
        final_value=final_value,
        terminated=terminated,
        truncated=truncated,
    )


def collect_episodes(
    env: GateEnv,
    spec: MlpSpec,
    theta: np.ndarray,
    task: TaskSpec,
    n_episodes: int,
    rng: np.random.Generator,
    deterministic: bool = False,
) -> list[EpisodeRecord]:
    return [
        collect_episode(env, spec, theta, task, rng, deterministic) for _ in range(n_episodes)
    ]


def collect_steps(
    env: GateEnv,
    spec: MlpSpec,
    theta: np.ndarray,
    task: TaskSpec,
    min_steps: int,
    rng: np.random.Generator,
) -> list[EpisodeRecord]:
    """Whole episodes until at least min_steps environment steps are gathered."""
    episodes, steps = [], 0
    while steps < min_steps:
        ep = collect_episode(env, spec, theta, task, rng)
        episodes.append(ep)
        steps += len(ep)
    return episodes


def compute_gae(
    episode: EpisodeRecord, gamma: float, lam: float
) -> tuple[np.ndarray, np.ndarray]:
    """GAE(gamma, lam) advantages and return targets for one episode.

    Success is absorbing (bootstrap 0); hitting the step budget bootstraps with
    the critic's value of the final observation.
    """
    t_len = len(episode)
    adv = np.zeros(t_len)
    next_value = 0.0 if episode.terminated else episode.final_value
    running = 0.0
    for t in range(t_len - 1, -1, -1):
        delta = episode.rewards[t] + gamma * next_value - episode.values[t]
        running = delta + gamma * lam * running
        adv[t] = running
        next_value = episode.values[t]
    return adv, adv + episode.values


@dataclass
class PreparedBatch:
    obs: np.ndarray
    actions: np.ndarray
    logp_old: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray

    def __len__(self) -> int:
        return self.obs.shape[0]


def prepare_batch(
    episodes: list[EpisodeRecord], gamma: float, lam: float, normalize: bool = True
) -> PreparedBatch:
    """Concatenate episodes, compute GAE, normalize advantages over the batch."""
    advs, rets = [], []
    for ep in episodes:
        a, r = compute_gae(ep, gamma, lam)
        advs.append(a)
        rets.append(r)
    adv = np.concatenate(advs)
    if normalize:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return PreparedBatch(
        obs=np.concatenate([ep.obs for ep in episodes]),
        actions=np.concatenate([ep.actions for ep in episodes]),
        logp_old=np.concatenate([ep.logps for ep in episodes]),
        advantages=adv,
        returns=np.concatenate(rets),
    )


@dataclass
class EvalStats:
    """Per-trial trajectory maxima from a Monte Carlo evaluation."""

    max_fidelities: np.ndarray
    steps_to_max: np.ndarray
    succeeded: np.ndarray

    @property
    def n_trials(self) -> int:
        return self.max_fidelities.shape[0]

    @property
    def mean_max_fidelity(self) -> float:
        return float(self.max_fidelities.mean())

    @property
    def std_max_fidelity(self) -> float:
        return float(self.max_fidelities.std())

    @property
    def mean_steps_to_max(self) -> float:
        return float(self.steps_to_max.mean())

    @property
    def success_rate(self) -> float:
        return float(self.succeeded.mean())


def evaluate_policy(
    env_config: EnvConfig,
    spec: MlpSpec,
    theta: np.ndarray,
    task: TaskSpec,
    n_trials: int,
    rng: np.random.Generator,
) -> EvalStats:
    """Closed-loop Monte Carlo evaluation with the deterministic policy mean."""
    env = GateEnv(env_config)
    streams = rng.spawn(n_trials)
    max_f = np.empty(n_trials)
    steps = np.empty(n_trials, dtype=int)
    succ = np.empty(n_trials, dtype=bool)
    for i, stream in enumerate(streams):
        ep = collect_episode(env, spec, theta, task, stream, deterministic=True)
        max_f[i] = ep.max_fidelity
        steps[i] = ep.steps_to_max
        succ[i] = ep.terminated
    return EvalStats(max_fidelities=max_f, steps_to_max=steps, succeeded=succ)
