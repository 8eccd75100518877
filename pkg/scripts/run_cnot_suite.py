#!/usr/bin/env python3
"""Two-qubit CNOT experiment: GRAPE/GA pulse optimization plus PPO and
metaQctrl training on the 4-dimensional gate (T=2.0, N=50, epsilon=1e-3),
followed by the disturbance sweep comparison.
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from qgatectrl import bench
from qgatectrl.csvio import write_dat
from qgatectrl.env import TaskSpec
from qgatectrl.grape import GrapeConfig, ga_optimize, grape_optimize
from qgatectrl.metarl import MetaConfig, meta_train, uniform_tasks
from qgatectrl.ppo import PpoConfig, ppo_train
from qgatectrl.seeding import derive_rng


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="results/cnot")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--trials", type=int, default=20)
    parser.add_argument("--eta-step", type=float, default=0.1)
    parser.add_argument("--meta-iterations", type=int, default=300)
    parser.add_argument("--ppo-steps", type=int, default=1_200_000)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    env = bench.default_env_config("cnot")
    etas = bench.default_eta_grid(args.eta_step)

    print("[1/4] GRAPE + GA on cnot")
    t0 = time.time()
    grape_pulses, grape_trace = grape_optimize(
        env.model, env.target_gate, env.max_steps, env.dt,
        GrapeConfig(iterations=2000, fidelity_tol=1 - 1e-5),
        rng=derive_rng(args.seed, "grape-init"),
    )
    print(f"      grape F={grape_trace[-1]:.6f}  ({time.time()-t0:.0f}s)")
    t0 = time.time()
    ga_pulses, ga_trace = ga_optimize(
        env.model, env.target_gate, env.max_steps, env.dt,
        GrapeConfig(iterations=200), rng=derive_rng(args.seed, "ga-init"),
    )
    print(f"      ga    F={ga_trace[-1]:.6f}  ({time.time()-t0:.0f}s)")

    print("[2/4] PPO at eta=0.3")
    t0 = time.time()
    ppo_result = ppo_train(
        env,
        PpoConfig(train_task=TaskSpec(env.model.mode, (0.3,)), total_steps=args.ppo_steps),
        args.seed,
    )
    print(f"      best eval F={ppo_result.best_eval_fidelity:.6f}  ({time.time()-t0:.0f}s)")

    print(f"[3/4] metaQctrl, {args.meta_iterations} meta-iterations")
    t0 = time.time()
    meta_result = meta_train(
        env,
        MetaConfig(task_distribution=uniform_tasks(), iterations=args.meta_iterations),
        args.seed,
    )
    meta_result.state.theta = meta_result.theta_best
    print(f"      best eval F={meta_result.best_eval_fidelity:.6f}  ({time.time()-t0:.0f}s)")

    print(f"[4/4] sweeps: {len(etas)} points x {args.trials} trials")
    artifacts = {
        "grape": bench.PulseArtifact(grape_pulses),
        "ga": bench.PulseArtifact(ga_pulses),
        "ppo": bench.PolicyArtifact(ppo_result.spec, ppo_result.theta_best),
        "metaqctrl": bench.MetaArtifact(meta_result.state, adapt_episodes=30, adapt_steps=3),
    }
    for name, artifact in artifacts.items():
        cfg = bench.ExperimentConfig(
            gate="cnot", algorithm=name, env=env, etas=etas,
            trials=args.trials, seed=args.seed, workers=args.workers,
        )
        rows = bench.run_sweep(cfg, artifact)
        bench.write_sweep_csv(out / f"sweep_{name}.csv", rows, {"seed": str(args.seed)})
        write_dat(out / f"sweep_{name}.dat", bench.SWEEP_FIELDS,
                  [r.as_dict() for r in rows], {"seed": str(args.seed)})
        fids = [r.mean_max_fidelity for r in rows]
        print(f"      {name:10s} F(eta=0)={fids[0]:.4f}  F(eta=1)={fids[-1]:.4f}")
    print(f"done; tables in {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
