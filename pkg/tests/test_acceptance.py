"""Acceptance suite: one test per workbench exit criterion.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
PASS/FAIL lines. The RL criteria train real agents at desk scale, so the
full suite takes tens of minutes; everything is seeded and deterministic.
"""

import time
from contextlib import contextmanager

import numpy as np
import pytest

from qgatectrl import bench, nnet
from qgatectrl.bench import AreaRatios, area_ratios, default_env_config, target_gate
from qgatectrl.cli import main as cli_main
from qgatectrl.env import EnvConfig, TaskSpec, common_task, reward_fn
from qgatectrl.grape import (
    GrapeConfig,
    evaluate_open_loop,
    fidelity_and_gradient,
    grape_optimize,
    nominal_fidelity,
)
from qgatectrl.metarl import (
    MetaConfig,
    fixed_task_distribution,
    meta_train,
    uniform_tasks,
)
from qgatectrl.nnet import MlpSpec, init_params, numerical_gradient
from qgatectrl.ppo import (
    ClipUpdateConfig,
    PpoConfig,
    clipped_loss_and_grad,
    ppo_train,
)
from qgatectrl.qcore import (
    DisturbanceMode,
    DisturbanceSpec,
    max_unitary_defect,
    propagator,
    single_qubit_model,
    two_qubit_model,
)
from qgatectrl.rollout import PreparedBatch, evaluate_policy
from qgatectrl.seeding import derive_rng


@contextmanager
def criterion(name: str):
    try:
        yield
    except BaseException:
        print(f"\n[acceptance] {name}: FAIL")
        raise
    print(f"\n[acceptance] {name}: PASS")


HADAMARD = target_gate("hadamard")
CNOT = target_gate("cnot")

META_EVAL_ETAS = (0.6, 0.8, 1.0)
META_SEEDS = (0, 1, 2)


# ---------------------------------------------------------------------------
# shared trained artifacts (built once, reused by criteria 8 and 9)
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def hadamard_env():
    return default_env_config("hadamard")


@pytest.fixture(scope="module")
def grape_hadamard(hadamard_env):
    env = hadamard_env
    pulses, trace = grape_optimize(
        env.model, env.target_gate, env.max_steps, env.dt, GrapeConfig(),
        rng=derive_rng(100, "grape-init"),
    )
    assert trace[-1] >= 0.999
    return pulses


@pytest.fixture(scope="module")
def ppo_agent(hadamard_env):
    cfg = PpoConfig(train_task=common_task(0.3))
    return ppo_train(hadamard_env, cfg, 0)


@pytest.fixture(scope="module")
def meta_agents(hadamard_env):
    agents = []
    for seed in META_SEEDS:
        cfg = MetaConfig(task_distribution=uniform_tasks(), iterations=300)
        result = meta_train(hadamard_env, cfg, seed)
        result.state.theta = result.theta_best
        agents.append(result.state)
    return agents


def meta_eval(state, env, eta, n_trials, tag):
    from qgatectrl.metarl import deploy_adapt

    task = common_task(eta)
    theta = deploy_adapt(
        state, env, task, state.config.episodes_per_rollout,
        derive_rng(900, "adapt", tag, eta),
    )
    return evaluate_policy(env, state.spec, theta, task, n_trials, derive_rng(900, "eval", tag, eta))


# ---------------------------------------------------------------------------
# 1-2: noise-free GRAPE quality and runtime
# ---------------------------------------------------------------------------

def test_criterion_1_grape_hadamard_noise_free():
    with criterion("1 noise-free GRAPE Hadamard (F>=0.999, <=500 iters, <60s)"):
        model = single_qubit_model()
        start = time.monotonic()
        _, trace = grape_optimize(
            model, HADAMARD, 40, 1.6 / 40, GrapeConfig(iterations=500),
            rng=derive_rng(1, "c1"),
        )
        elapsed = time.monotonic() - start
        assert trace[-1] >= 0.999
        assert len(trace) - 1 <= 500
        assert elapsed < 60.0


def test_criterion_2_grape_cnot_noise_free():
    with criterion("2 noise-free GRAPE CNOT (F>=0.99, <=2000 iters, <5min)"):
        model = two_qubit_model()
        start = time.monotonic()
        _, trace = grape_optimize(
            model, CNOT, 50, 2.0 / 50, GrapeConfig(iterations=2000, fidelity_tol=1 - 1e-4),
            rng=derive_rng(2, "c2"),
        )
        elapsed = time.monotonic() - start
        assert trace[-1] >= 0.99
        assert len(trace) - 1 <= 2000
        assert elapsed < 300.0


# ---------------------------------------------------------------------------
# 3: exact pulse gradients
# ---------------------------------------------------------------------------

def test_criterion_3_grape_gradient_vs_central_differences():
    with criterion("3 GRAPE exact gradient vs central FD (rel err < 1e-6)"):
        h = 1e-6
        for n_qubits, model, target in (
            (1, single_qubit_model(), HADAMARD),
            (2, two_qubit_model(), CNOT),
        ):
            rng = derive_rng(3, "c3", n_qubits)
            for _ in range(10):
                n_steps = int(rng.integers(4, 10))
                amps = rng.uniform(-3, 3, (n_steps, model.n_controls))
                dt = float(rng.uniform(0.02, 0.08))
                _, grad = fidelity_and_gradient(model, target, amps, dt)
                num = np.empty_like(grad)
                probe = amps.copy()
                for j in range(n_steps):
                    for k in range(model.n_controls):
                        probe[j, k] = amps[j, k] + h
                        up = nominal_fidelity(model, target, probe, dt)
                        probe[j, k] = amps[j, k] - h
                        down = nominal_fidelity(model, target, probe, dt)
                        probe[j, k] = amps[j, k]
                        num[j, k] = (up - down) / (2 * h)
                rel = np.linalg.norm(grad - num) / max(np.linalg.norm(grad), np.linalg.norm(num))
                assert rel < 1e-6


# ---------------------------------------------------------------------------
# 4: network gradients
# ---------------------------------------------------------------------------

def _case_batch(spec, theta, size, rng):
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
            if np.min(np.abs(delta - edges)) > 0.01:  # stay off the clip kinks
                offsets[i] = delta
                break
    return PreparedBatch(
        obs=obs, actions=actions, logp_old=logp - offsets,
        advantages=rng.normal(size=size), returns=rng.normal(size=size),
    )


def test_criterion_4_network_gradients_vs_finite_differences():
    with criterion("4 reverse-mode vs FD over 50 random cases (rel err < 1e-4)"):
        checked = 0
        cfg = ClipUpdateConfig()
        for case in range(50):
            rng = derive_rng(4, "c4", case)
            spec = MlpSpec(int(rng.integers(3, 8)), int(rng.integers(1, 4)),
                           (int(rng.integers(4, 9)), int(rng.integers(3, 8))))
            theta = init_params(spec, rng)
            batch = _case_batch(spec, theta, int(rng.integers(8, 25)), rng)
            kind = case % 3
            if kind == 0:  # full clipped actor-critic loss
                loss_fn = lambda th: clipped_loss_and_grad(spec, th, batch, cfg)[0]
                _, grad, _ = clipped_loss_and_grad(spec, theta, batch, cfg)
            elif kind == 1:  # value regression only
                vcfg = ClipUpdateConfig(entropy_coef=0.0)

                def value_loss(th):
                    values, _ = nnet.critic_forward(spec, th, batch.obs)
                    return float(np.mean((values - batch.returns) ** 2))

                loss_fn = value_loss
                values, acts = nnet.critic_forward(spec, theta, batch.obs)
                grad = nnet.critic_backward(
                    spec, theta, acts, 2.0 * (values - batch.returns) / len(batch)
                )
            else:  # mean log-probability of the stored actions
                def lp_loss(th):
                    means, _ = nnet.actor_forward(spec, th, batch.obs)
                    lp = nnet.gaussian_logp(means, nnet.log_std_of(spec, th), batch.actions)
                    return float(lp.mean())

                loss_fn = lp_loss
                means, acts = nnet.actor_forward(spec, theta, batch.obs)
                dmean, dls = nnet.gaussian_logp_grads(
                    means, nnet.log_std_of(spec, theta), batch.actions
                )
                n = len(batch)
                grad = nnet.actor_backward(spec, theta, acts, dmean / n, dls.sum(axis=0) / n)
            num = numerical_gradient(loss_fn, theta)
            rel = np.linalg.norm(grad - num) / max(np.linalg.norm(grad), np.linalg.norm(num))
            assert rel < 1e-4, f"case {case}: rel err {rel:.3e}"
            checked += 1
        assert checked == 50


# ---------------------------------------------------------------------------
# 5: reward branches, exact
# ---------------------------------------------------------------------------

def test_criterion_5_reward_branches_exact():
    with criterion("5 piecewise reward: 12 exact cases incl. boundaries"):
        T = 1.0
        eps = 1e-4
        cases = [
            # success branch 500*(1-t/T)
            (1.0, 0.0, eps, 500.0),
            (0.99995, 0.25, eps, 375.0),
            (1.0, 1.0, eps, 0.0),
            # high band 10*(1-t/T), including the F = 1-eps boundary
            (0.999, 0.5, eps, 5.0),
            (0.985, 0.0, eps, 10.0),
            (1.0 - eps, 0.5, eps, 5.0),
            # mid band (1-t/T), including the F = 0.98 boundary
            (0.95, 0.5, eps, 0.5),
            (0.98, 0.25, 1e-3, 0.75),
            (0.905, 1.0, eps, 0.0),
            # failure branch -(1-F), including the F = 0.9 boundary
            (0.5, 0.5, eps, -(1.0 - 0.5)),
            (0.9, 0.0, eps, -(1.0 - 0.9)),
            (0.0, 0.75, eps, -1.0),
        ]
        assert len(cases) == 12
        for fid, t, epsilon, expected in cases:
            got = reward_fn(fid, t, T, epsilon)
            assert got == expected, (fid, t, epsilon, got, expected)


# ---------------------------------------------------------------------------
# 6: propagator oracle
# ---------------------------------------------------------------------------

def test_criterion_6_propagator_series_and_unitarity():
    with criterion("6 propagator vs 30-term series (<=1e-9), unitarity (<1e-10)"):
        rng = derive_rng(6, "c6")
        for case in range(100):
            dim = 2 if case % 2 == 0 else 4
            a = rng.uniform(-1, 1, (dim, dim)) + 1j * rng.uniform(-1, 1, (dim, dim))
            h = (a + a.conj().T) / 2
            dt = float(rng.uniform(0.01, 1.0))
            norm = np.linalg.norm(h, 2)
            if norm * dt > 1.0:
                h = h / (norm * dt)
            u = propagator(h, dt)
            series = np.eye(dim, dtype=complex)
            term = np.eye(dim, dtype=complex)
            m = -1j * h * dt
            for k in range(1, 30):
                term = term @ m / k
                series = series + term
            assert np.max(np.abs(u - series)) <= 1e-9
            assert max_unitary_defect(u) < 1e-10


# ---------------------------------------------------------------------------
# 7: PPO reaches success on the noise-free Hadamard
# ---------------------------------------------------------------------------

def test_criterion_7_ppo_desk_scale_success():
    with criterion("7 PPO noise-free Hadamard: >=8/10 seeds succeed within 3e5 steps"):
        env = EnvConfig(
            model=single_qubit_model(),
            target_gate=HADAMARD,
            horizon=1.6,
            max_steps=40,
            epsilon=1e-3,
            disturbance=DisturbanceSpec((0.0,)),
        )
        cfg = PpoConfig(
            train_task=common_task(0.0),
            total_steps=300_000,
            early_stop_on_success=True,
        )
        successes = 0
        for seed in range(10):
            start = time.monotonic()
            result = ppo_train(env, cfg, seed)
            elapsed = time.monotonic() - start
            assert elapsed < 900.0, f"seed {seed} took {elapsed:.0f}s"
            if result.first_success_step is not None and result.first_success_step <= 300_000:
                successes += 1
        print(f"\n[acceptance]   criterion 7 detail: {successes}/10 seeds succeeded")
        assert successes >= 8


# ---------------------------------------------------------------------------
# 8: success-speed property at eta = 0.3
# ---------------------------------------------------------------------------

def test_criterion_8_success_speed(hadamard_env, ppo_agent, meta_agents):
    with criterion("8 successful episodes at eta=0.3 finish in < N/2 = 20 steps"):
        agents = [("ppo", None)] + [(f"metaqctrl-{s}", s) for s in META_SEEDS]
        checked_any = False
        for name, seed in agents:
            if seed is None:
                stats = evaluate_policy(
                    hadamard_env, ppo_agent.spec, ppo_agent.theta_best,
                    common_task(0.3), 30, derive_rng(8, "c8", name),
                )
            else:
                stats = meta_eval(meta_agents[seed], hadamard_env, 0.3, 30, f"c8-{name}")
            success_steps = stats.steps_to_max[stats.succeeded]
            if success_steps.size == 0:
                print(f"\n[acceptance]   criterion 8 detail: {name} had no successes")
                continue
            checked_any = True
            fast = float(np.mean(success_steps < 20))
            print(
                f"\n[acceptance]   criterion 8 detail: {name} successes={success_steps.size}/30 "
                f"fast_fraction={fast:.2f}"
            )
            assert fast > 0.5, f"{name}: only {fast:.2f} of successes were faster than 20 steps"
        assert checked_any, "no agent produced a successful evaluation episode"


# ---------------------------------------------------------------------------
# 9: robustness ordering at high disturbance
# ---------------------------------------------------------------------------

def test_criterion_9_robustness_ordering(hadamard_env, grape_hadamard, ppo_agent, meta_agents):
    with criterion("9 metaQctrl >= GRAPE+0.05 and >= PPO at eta in {0.6,0.8,1.0} (2 of 3 seeds)"):
        env = hadamard_env
        grape_means = [
            evaluate_open_loop(
                grape_hadamard, env.model, env.target_gate, common_task(eta), 30,
                derive_rng(9, "grape", eta),
            ).mean_max_fidelity
            for eta in META_EVAL_ETAS
        ]
        ppo_means = [
            evaluate_policy(
                env, ppo_agent.spec, ppo_agent.theta_best, common_task(eta), 30,
                derive_rng(9, "ppo", eta),
            ).mean_max_fidelity
            for eta in META_EVAL_ETAS
        ]
        grape_avg = float(np.mean(grape_means))
        ppo_avg = float(np.mean(ppo_means))
        wins = 0
        details = [f"grape={grape_avg:.5f}", f"ppo={ppo_avg:.5f}"]
        for seed, state in zip(META_SEEDS, meta_agents):
            meta_avg = float(np.mean([
                meta_eval(state, env, eta, 30, f"c9-{seed}").mean_max_fidelity
                for eta in META_EVAL_ETAS
            ]))
            ok = (meta_avg >= grape_avg + 0.05) and (meta_avg >= ppo_avg)
            wins += ok
            details.append(f"meta[{seed}]={meta_avg:.5f}{'*' if ok else ''}")
        print(f"\n[acceptance]   criterion 9 detail: {' '.join(details)} wins={wins}/3")
        assert wins >= 2


# ---------------------------------------------------------------------------
# 10: single-task reduction oracle
# ---------------------------------------------------------------------------

def test_criterion_10_reduction_to_ppo_bit_level():
    with criterion("10 metaQctrl(K=1, alpha=0) == PPO parameter trajectory, bit-level"):
        env = EnvConfig(
            model=single_qubit_model(),
            target_gate=HADAMARD,
            horizon=1.6,
            max_steps=40,
            epsilon=1e-3,
            disturbance=DisturbanceSpec((0.3,)),
        )
        seed = 77
        n_episodes = 4
        thetas_meta, thetas_ppo = [], []
        for iterations in range(1, 6):
            meta_cfg = MetaConfig(
                task_distribution=fixed_task_distribution(common_task(0.3)),
                tasks_per_iteration=1,
                episodes_per_rollout=n_episodes,
                inner_lr=0.0,
                iterations=iterations,
                eval_every=10**6,
                lr_decay=False,
                entropy_decay=False,
            )
            ppo_cfg = PpoConfig(
                train_task=common_task(0.3),
                episodes_per_batch=n_episodes,
                total_steps=10**9,
                max_iterations=iterations,
                eval_every=10**6,
                lr_decay=False,
                entropy_decay=False,
            )
            thetas_meta.append(meta_train(env, meta_cfg, seed).state.theta)
            thetas_ppo.append(ppo_train(env, ppo_cfg, seed).theta)
        for i, (a, b) in enumerate(zip(thetas_meta, thetas_ppo), start=1):
            assert np.array_equal(a, b), f"trajectories diverge at iteration {i}"


# ---------------------------------------------------------------------------
# 11: heatmap / area-ratio machinery
# ---------------------------------------------------------------------------

def test_criterion_11_area_ratios_exact_and_ordered():
    with criterion("11 area ratios exact on synthetic grid; ordering on real run"):
        # hand-counted synthetic grid: infidelities
        # {0, 5e-5, 1e-4, 1e-2, 1e-6, 9.5e-5, 2e-4, 1e-5}
        fids = np.array([
            1.0, 1.0 - 5e-5, 1.0 - 1e-4, 0.99, 1.0 - 1e-6, 1.0 - 9.5e-5,
            1.0 - 2e-4, 1.0 - 1e-5,
        ])
        ratios = area_ratios(fids)
        assert ratios.fraction_1e4 == 6 / 8   # all but 1e-2 and 2e-4
        assert ratios.fraction_1e5 == 3 / 8   # 0, 1e-6, 1e-5
        assert ratios == AreaRatios(6 / 8, 3 / 8)

        env = default_env_config("hadamard", DisturbanceMode.DRIFT_AND_CONTROL)
        pulses, _ = grape_optimize(
            env.model, env.target_gate, env.max_steps, env.dt,
            GrapeConfig(iterations=150), rng=derive_rng(11, "c11"),
        )
        cfg = bench.ExperimentConfig(
            gate="hadamard", algorithm="grape", env=env, etas=(0.0,),
            trials=4, seed=11, workers=1,
        )
        _, real_ratios = bench.run_heatmap(cfg, bench.PulseArtifact(pulses), resolution=5)
        assert real_ratios.fraction_1e5 <= real_ratios.fraction_1e4


# ---------------------------------------------------------------------------
# 12: CLI determinism and worker-count independence
# ---------------------------------------------------------------------------

def _files_equal(a, b, names):
    return all((a / n).read_bytes() == (b / n).read_bytes() for n in names)


def test_criterion_12_cli_determinism(tmp_path):
    with criterion("12 CLI reruns and worker counts produce identical CSV payloads"):
        def run(*args):
            assert cli_main([str(a) for a in args]) == 0

        # pulse optimizers rerun byte-identically
        for cmd, extra in (("grape", ["--set", "grape.iterations=30"]),
                           ("ga", ["--set", "ga.iterations=3", "--set", "env.N=10"])):
            a, b = tmp_path / f"{cmd}_a", tmp_path / f"{cmd}_b"
            run(cmd, "--seed", 4, "--out", a, *extra)
            run(cmd, "--seed", 4, "--out", b, *extra)
            assert _files_equal(a, b, ["pulses.csv", "fidelity_trace.csv"])

        # trainers rerun byte-identically
        tiny_ppo = ["--set", "ppo.total_steps=240", "--set", "ppo.rollout_steps=80",
                    "--set", "ppo.eval_every=1", "--set", "ppo.eval_episodes=1"]
        a, b = tmp_path / "ppo_a", tmp_path / "ppo_b"
        run("train-ppo", "--seed", 1, "--out", a, *tiny_ppo)
        run("train-ppo", "--seed", 1, "--out", b, *tiny_ppo)
        assert _files_equal(a, b, ["curve.csv", "checkpoint.json"])

        tiny_meta = ["--set", "meta.iterations=1", "--set", "meta.K=1",
                     "--set", "meta.n_episodes=1", "--set", "meta.eval_episodes=1"]
        a, b = tmp_path / "meta_a", tmp_path / "meta_b"
        run("train-meta", "--seed", 1, "--out", a, *tiny_meta)
        run("train-meta", "--seed", 1, "--out", b, *tiny_meta)
        assert _files_equal(a, b, ["curve.csv", "checkpoint.json"])

        # evaluation commands: identical across reruns AND worker counts
        pulse_dir = tmp_path / "grape_a"
        art = ["--set", "algorithm=grape", "--set", f"artifact={pulse_dir / 'pulses.csv'}"]
        sweep_sets = ["--set", "sweep.etas=0,1.0", "--set", "sweep.trials=4"]
        outs = []
        for workers, name in ((1, "s1"), (2, "s2")):
            out = tmp_path / name
            run("sweep", "--seed", 5, "--out", out, "--workers", workers, *art, *sweep_sets)
            outs.append(out)
        assert _files_equal(outs[0], outs[1], ["sweep.csv", "sweep.dat"])

        heat_sets = ["--set", "disturbance.mode=dual", "--set", "heatmap.resolution=3",
                     "--set", "heatmap.trials=2"]
        outs = []
        for workers, name in ((1, "h1"), (2, "h2")):
            out = tmp_path / name
            run("heatmap", "--seed", 6, "--out", out, "--workers", workers, *art, *heat_sets)
            outs.append(out)
        assert _files_equal(outs[0], outs[1], ["heatmap.csv", "heatmap.dat"])

        outs = []
        for workers, name in ((1, "e1"), (2, "e2")):
            out = tmp_path / name
            run("eval", "--seed", 7, "--out", out, "--workers", workers, *art,
                "--set", "eval.eta=0.5", "--set", "eval.trials=4")
            outs.append(out)
        assert _files_equal(outs[0], outs[1], ["eval.csv"])
