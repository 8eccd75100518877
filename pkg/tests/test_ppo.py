import numpy as np
import pytest

from qgatectrl import nnet
from qgatectrl.env import EnvConfig, GateEnv, common_task
from qgatectrl.nnet import MlpSpec, init_params, numerical_gradient
from qgatectrl.ppo import (
    ClipUpdateConfig,
    PpoConfig,
    clipped_loss_and_grad,
    clipped_update,
    ppo_evaluate,
    ppo_train,
)
from qgatectrl.qcore import DisturbanceSpec, single_qubit_model
from qgatectrl.rollout import (
    PreparedBatch,
    collect_episode,
    collect_episodes,
    compute_gae,
    prepare_batch,
)
from qgatectrl.env import reward_fn
from qgatectrl.seeding import derive_rng

HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def hadamard_env(eta=0.0, epsilon=1e-3):
    return EnvConfig(
        model=single_qubit_model(),
        target_gate=HADAMARD,
        horizon=1.6,
        max_steps=40,
        epsilon=epsilon,
        disturbance=DisturbanceSpec((eta,)),
    )


def small_policy(seed=0):
    spec = MlpSpec(8, 2, (10, 8))
    return spec, init_params(spec, derive_rng(seed, "p"))


def random_batch(spec, theta, size, seed, margin=0.01):
    """Batch whose ratios stay clear of the clip kinks so FD checks are smooth."""
    rng = derive_rng(seed, "batch")
    obs = rng.uniform(-1, 1, (size, spec.obs_dim))
    actions = rng.normal(scale=0.7, size=(size, spec.act_dim))
    means, _ = nnet.actor_forward(spec, theta, obs)
    log_std = nnet.log_std_of(spec, theta)
    logp = nnet.gaussian_logp(means, log_std, actions)
    edges = np.array([np.log(0.8), np.log(1.2)])
    offsets = np.empty(size)
    for i in range(size):
        while True:
            delta = rng.uniform(-0.35, 0.35)
            if np.min(np.abs(delta - edges)) > margin:
                offsets[i] = delta
                break
    advantages = rng.normal(size=size)
    return PreparedBatch(
        obs=obs,
        actions=actions,
        logp_old=logp - offsets,
        advantages=advantages,
        returns=rng.normal(size=size),
    )


# ---------------------------------------------------------------------------
# episode plumbing
# ---------------------------------------------------------------------------

def test_episode_logps_match_recomputation():
    spec, theta = small_policy()
    env = GateEnv(hadamard_env(eta=0.5))
    ep = collect_episode(env, spec, theta, common_task(0.5), derive_rng(0, "ep"))
    means, _ = nnet.actor_forward(spec, theta, ep.obs)
    logp = nnet.gaussian_logp(means, nnet.log_std_of(spec, theta), ep.actions)
    assert np.max(np.abs(logp - ep.logps)) < 1e-10


def test_episode_rewards_match_reward_fn():
    spec, theta = small_policy()
    cfg = hadamard_env()
    ep = collect_episode(GateEnv(cfg), spec, theta, common_task(0.0), derive_rng(1, "ep"))
    for t in range(len(ep)):
        expected = reward_fn(ep.fidelities[t], (t + 1) * cfg.dt, cfg.horizon, cfg.epsilon)
        assert ep.rewards[t] == pytest.approx(expected, abs=1e-12)
    assert len(ep) <= cfg.max_steps


def test_gae_matches_hand_recursion():
    spec, theta = small_policy()
    env = GateEnv(hadamard_env(eta=0.3))
    ep = collect_episode(env, spec, theta, common_task(0.3), derive_rng(2, "ep"))
    gamma, lam = 0.9, 0.8
    adv, ret = compute_gae(ep, gamma, lam)
    boot = 0.0 if ep.terminated else ep.final_value
    values_next = np.append(ep.values[1:], boot)
    deltas = ep.rewards + gamma * values_next - ep.values
    expected = np.zeros_like(deltas)
    acc = 0.0
    for t in range(len(ep) - 1, -1, -1):
        acc = deltas[t] + gamma * lam * acc
        expected[t] = acc
    assert np.allclose(adv, expected, atol=1e-12)
    assert np.allclose(ret, expected + ep.values, atol=1e-12)


def test_prepare_batch_normalizes_advantages():
    spec, theta = small_policy()
    env = GateEnv(hadamard_env(eta=0.4))
    eps = collect_episodes(env, spec, theta, common_task(0.4), 4, derive_rng(3, "eps"))
    batch = prepare_batch(eps, 0.99, 0.95)
    assert abs(batch.advantages.mean()) < 1e-9
    assert batch.advantages.std() == pytest.approx(1.0, abs=1e-6)


# ---------------------------------------------------------------------------
# clipped surrogate
# ---------------------------------------------------------------------------

def test_clip_arithmetic_positive_advantage():
    # ratio 1.5, eps 0.2, advantage +1 -> min(1.5, 1.2) = 1.2
    term = min(1.5 * 1.0, np.clip(1.5, 0.8, 1.2) * 1.0)
    assert term == pytest.approx(1.2)


def test_clip_arithmetic_negative_advantage():
    # ratio 0.5, eps 0.2, advantage -1 -> min(-0.5, -0.8) = -0.8
    term = min(0.5 * -1.0, np.clip(0.5, 0.8, 1.2) * -1.0)
    assert term == pytest.approx(-0.8)


def test_surrogate_terms_follow_clip_formula():
    spec, theta = small_policy(1)
    batch = random_batch(spec, theta, 64, seed=4)
    cfg = ClipUpdateConfig()
    _, _, stats = clipped_loss_and_grad(spec, theta, batch, cfg, return_terms=True)
    ratio = stats["ratio"]
    expected = np.minimum(
        ratio * batch.advantages,
        np.clip(ratio, 1 - cfg.clip_eps, 1 + cfg.clip_eps) * batch.advantages,
    )
    assert np.array_equal(stats["terms"], expected)


def test_identical_policies_give_mean_advantage():
    spec, theta = small_policy(2)
    rng = derive_rng(5, "b")
    obs = rng.uniform(-1, 1, (32, spec.obs_dim))
    actions = rng.normal(size=(32, spec.act_dim))
    means, _ = nnet.actor_forward(spec, theta, obs)
    logp = nnet.gaussian_logp(means, nnet.log_std_of(spec, theta), actions)
    adv = rng.normal(size=32)
    batch = PreparedBatch(obs, actions, logp, adv, rng.normal(size=32))
    _, _, stats = clipped_loss_and_grad(spec, theta, batch, ClipUpdateConfig())
    assert stats["surrogate"] == pytest.approx(adv.mean(), abs=1e-12)
    assert stats["clip_fraction"] == 0.0


def test_saturated_clip_blocks_policy_gradient():
    spec, theta = small_policy(3)
    rng = derive_rng(6, "b")
    obs = rng.uniform(-1, 1, (4, spec.obs_dim))
    actions = rng.normal(size=(4, spec.act_dim))
    means, _ = nnet.actor_forward(spec, theta, obs)
    logp = nnet.gaussian_logp(means, nnet.log_std_of(spec, theta), actions)
    # ratio = e^{0.5} ≈ 1.65 > 1.2 with positive advantages: clip saturates
    batch = PreparedBatch(obs, actions, logp - 0.5, np.ones(4), np.zeros(4))
    cfg = ClipUpdateConfig(entropy_coef=0.0, value_coef=0.0)
    _, grad, stats = clipped_loss_and_grad(spec, theta, batch, cfg)
    assert stats["clip_fraction"] == 1.0
    assert np.array_equal(grad, np.zeros_like(grad))


def test_clipped_loss_gradient_matches_finite_differences():
    spec = MlpSpec(5, 2, (6, 5))
    theta = init_params(spec, derive_rng(9, "t"))
    batch = random_batch(spec, theta, 24, seed=10)
    cfg = ClipUpdateConfig()
    worst = 0.0
    _, grad, _ = clipped_loss_and_grad(spec, theta, batch, cfg)
    num = numerical_gradient(lambda th: clipped_loss_and_grad(spec, th, batch, cfg)[0], theta)
    rel = np.linalg.norm(grad - num) / max(np.linalg.norm(grad), np.linalg.norm(num))
    assert rel < 1e-6


def test_non_finite_loss_aborts():
    spec, theta = small_policy(4)
    rng = derive_rng(7, "b")
    obs = rng.uniform(-1, 1, (2, spec.obs_dim))
    actions = rng.normal(size=(2, spec.act_dim))
    # ratio overflows to inf; negative advantages route the min to the
    # unclipped branch, making the surrogate itself non-finite
    batch = PreparedBatch(obs, actions, np.array([-1e6, -1e6]), -np.ones(2), np.zeros(2))
    with np.errstate(over="ignore"), pytest.raises(ArithmeticError):
        clipped_loss_and_grad(spec, theta, batch, ClipUpdateConfig())


def test_clipped_update_is_deterministic():
    spec, theta = small_policy(5)
    batch = random_batch(spec, theta, 40, seed=11)
    outs = []
    for _ in range(2):
        adam = nnet.AdamState.zeros(theta.size)
        out, _ = clipped_update(spec, theta.copy(), adam, batch, ClipUpdateConfig(), derive_rng(1, "u"))
        outs.append(out)
    assert np.array_equal(outs[0], outs[1])


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

def tiny_ppo_config(**overrides):
    base = dict(
        train_task=common_task(0.0),
        episodes_per_batch=2,
        total_steps=10**9,
        max_iterations=2,
        eval_every=1,
        eval_episodes=2,
        lr_decay=False,
        entropy_decay=False,
    )
    base.update(overrides)
    return PpoConfig(**base)


def test_ppo_train_is_bit_reproducible():
    env_cfg = hadamard_env(eta=0.3)
    cfg = tiny_ppo_config(train_task=common_task(0.3))
    r1 = ppo_train(env_cfg, cfg, 7)
    r2 = ppo_train(env_cfg, cfg, 7)
    assert np.array_equal(r1.theta, r2.theta)
    assert r1.curve == r2.curve


def test_ppo_seed_changes_trajectory():
    env_cfg = hadamard_env()
    cfg = tiny_ppo_config()
    r1 = ppo_train(env_cfg, cfg, 0)
    r2 = ppo_train(env_cfg, cfg, 1)
    assert not np.array_equal(r1.theta, r2.theta)


def test_ppo_evaluate_deterministic_env():
    env_cfg = hadamard_env(eta=0.0)
    spec, theta = small_policy(6)
    stats = ppo_evaluate(spec, theta, env_cfg, common_task(0.0), 5, derive_rng(0, "ev"))
    assert np.all(stats.max_fidelities == stats.max_fidelities[0])
    assert np.all((stats.max_fidelities >= 0) & (stats.max_fidelities <= 1))
    assert np.all(stats.steps_to_max <= env_cfg.max_steps)


def test_ppo_config_validation():
    with pytest.raises(ValueError):
        PpoConfig(train_task=common_task(0.0), clip_eps=1.5)
    with pytest.raises(ValueError):
        PpoConfig(train_task=common_task(0.0), gamma=0.0)
