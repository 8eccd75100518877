#!/usr/bin/env python3
"""End-to-end single-qubit experiment: optimize/train all four controllers on
a chosen gate, sweep the disturbance grid, and emit comparison tables.

Desk-scale by default; pass --full for paper-scale trials/grids. Everything
lands under --out as CSV + gnuplot .dat files.
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from qgatectrl import bench
from qgatectrl.csvio import write_dat, write_table
from qgatectrl.env import TaskSpec
from qgatectrl.grape import GrapeConfig, ga_optimize, grape_optimize
from qgatectrl.metarl import MetaConfig, meta_train, uniform_tasks
from qgatectrl.ppo import PpoConfig, ppo_train
from qgatectrl.seeding import derive_rng


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--gate", default="hadamard", choices=["hadamard", "pi8", "phase"])
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="results/single_qubit")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--full", action="store_true", help="paper-scale trials and grid")
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    env = bench.default_env_config(args.gate)
    trials = 100 if args.full else 20
    etas = bench.default_eta_grid(0.05 if args.full else 0.1)
    meta_iters = 300
    ppo_eta = 0.3

    print(f"[1/5] GRAPE + GA on {args.gate}")
    t0 = time.time()
    grape_pulses, grape_trace = grape_optimize(
        env.model, env.target_gate, env.max_steps, env.dt, GrapeConfig(),
        rng=derive_rng(args.seed, "grape-init"),
    )
    ga_pulses, ga_trace = ga_optimize(
        env.model, env.target_gate, env.max_steps, env.dt,
        GrapeConfig(iterations=300), rng=derive_rng(args.seed, "ga-init"),
    )
    print(f"      grape F={grape_trace[-1]:.6f}  ga F={ga_trace[-1]:.6f}  ({time.time()-t0:.0f}s)")

    print("[2/5] PPO at fixed eta=0.3")
    t0 = time.time()
    ppo_result = ppo_train(env, PpoConfig(train_task=TaskSpec(env.model.mode, (ppo_eta,))), args.seed)
    print(f"      best eval F={ppo_result.best_eval_fidelity:.6f}  ({time.time()-t0:.0f}s)")

    print(f"[3/5] metaQctrl over eta ~ U(0,1), {meta_iters} meta-iterations")
    t0 = time.time()
    meta_result = meta_train(
        env, MetaConfig(task_distribution=uniform_tasks(), iterations=meta_iters), args.seed
    )
    meta_result.state.theta = meta_result.theta_best
    print(f"      best eval F={meta_result.best_eval_fidelity:.6f}  ({time.time()-t0:.0f}s)")

    print(f"[4/5] sweeps: {len(etas)} grid points x {trials} trials")
    results = {}
    artifacts = {
        "grape": bench.PulseArtifact(grape_pulses),
        "ga": bench.PulseArtifact(ga_pulses),
        "ppo": bench.PolicyArtifact(ppo_result.spec, ppo_result.theta_best),
        "metaqctrl": bench.MetaArtifact(meta_result.state, adapt_episodes=30, adapt_steps=3),
    }
    for name, artifact in artifacts.items():
        cfg = bench.ExperimentConfig(
            gate=args.gate, algorithm=name, env=env, etas=etas,
            trials=trials, seed=args.seed, workers=args.workers,
        )
        rows = bench.run_sweep(cfg, artifact)
        results[name] = rows
        bench.write_sweep_csv(out / f"sweep_{name}.csv", rows, {"seed": str(args.seed)})
        write_dat(out / f"sweep_{name}.dat", bench.SWEEP_FIELDS,
                  [r.as_dict() for r in rows], {"seed": str(args.seed)})
        fids = [r.mean_max_fidelity for r in rows]
        print(f"      {name:10s} F(eta=0)={fids[0]:.4f}  F(eta=1)={fids[-1]:.4f}")

    print("[5/5] comparison report")
    report = bench.compare_report(results)
    rows = []
    for pair in report.pairs:
        rows.append({
            "first": pair.first, "second": pair.second,
            "mean_gap": pair.mean_gap, "max_gap": pair.max_gap,
            "gap_at_eta_1": pair.gap_at_eta_1 if pair.gap_at_eta_1 is not None else float("nan"),
        })
    write_table(out / "comparison.csv", ["first", "second", "mean_gap", "max_gap", "gap_at_eta_1"],
                rows, {"seed": str(args.seed)})
    headline = report.pair("metaqctrl", "grape")
    print(f"      metaqctrl - grape at eta=1.0: {headline.gap_at_eta_1:+.4f}")
    print(f"done; tables in {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
