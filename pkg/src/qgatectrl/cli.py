"""Command-line entry point.

Subcommands: grape, ga, train-ppo, train-meta, sweep, heatmap, eval.
Common flags: --config PATH, --seed INT, --out DIR, --workers INT,
--set key=value (repeatable; overrides file values).

Exit codes: 0 completed; 2 bad configuration or arguments; 3 missing input
artifact; 1 unexpected failure. Every output file embeds a header comment
with the effective config hash, the seed, and the package version, and the
effective configuration itself is echoed to <out>/effective.cfg.
"""

from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__, bench, ppo
from .config import (
    Config,
    ConfigError,
    MissingArtifactError,
    build_env_config,
    build_grape_config,
    build_meta_config,
    build_ppo_config,
    parse_eta_grid,
)
from .csvio import read_table, write_dat, write_table
from .env import EnvConfig, TaskSpec
from .grape import ga_optimize, grape_optimize
from .metarl import MetaConfig, MetaState, TaskDistribution, meta_train
from .nnet import AdamState, load_checkpoint, save_checkpoint
from .qcore import ControlPulseSequence, DisturbanceMode
from .seeding import derive_rng

PPO_CURVE_FIELDS = ["iteration", "env_steps", "mean_return", "mean_max_fidelity", "eval_mean_max_fidelity"]
TRACE_FIELDS = ["iteration", "best_fidelity"]


# ---------------------------------------------------------------------------
# pulse schedule files: step,u_x1,u_y1[,u_x2,u_y2]
# ---------------------------------------------------------------------------

def pulse_fieldnames(n_qubits: int) -> list[str]:
    names = ["step"]
    for j in range(1, n_qubits + 1):
        names += [f"u_x{j}", f"u_y{j}"]
    return names


def write_pulse_csv(path, pulses: ControlPulseSequence, n_qubits: int, meta: dict) -> None:
    meta = dict(meta)
    meta["dt"] = repr(pulses.dt)
    meta["u_min"] = repr(pulses.u_min)
    meta["u_max"] = repr(pulses.u_max)
    rows = []
    for step in range(pulses.n_steps):
        row = {"step": step}
        for j in range(1, n_qubits + 1):
            # internal column order is x1..xn, y1..yn
            row[f"u_x{j}"] = float(pulses.amplitudes[step, j - 1])
            row[f"u_y{j}"] = float(pulses.amplitudes[step, n_qubits + j - 1])
        rows.append(row)
    write_table(path, pulse_fieldnames(n_qubits), rows, meta)


def read_pulse_csv(path) -> ControlPulseSequence:
    fieldnames, raw, meta = read_table(path)
    n_qubits = (len(fieldnames) - 1) // 2
    amplitudes = np.empty((len(raw), 2 * n_qubits))
    for i, row in enumerate(raw):
        for j in range(1, n_qubits + 1):
            amplitudes[i, j - 1] = float(row[f"u_x{j}"])
            amplitudes[i, n_qubits + j - 1] = float(row[f"u_y{j}"])
    return ControlPulseSequence(
        dt=float(meta["dt"]),
        amplitudes=amplitudes,
        u_min=float(meta.get("u_min", -5.0)),
        u_max=float(meta.get("u_max", 5.0)),
    )


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------

def _load_config(args) -> Config:
    cfg = Config.from_file(args.config) if args.config else Config()
    cfg.apply_overrides(args.set or [])
    return cfg


def _header_meta(cfg: Config, seed: int) -> dict[str, str]:
    return {"config_hash": cfg.hash(), "seed": str(seed), "version": __version__}


def _prepare_out(args, cfg: Config) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "effective.cfg").write_text(cfg.effective_text())
    return out


def _require_artifact(path_text: str | None, what: str) -> Path:
    if not path_text:
        raise ConfigError(f"config key 'artifact' is required for {what}")
    path = Path(path_text)
    if not path.exists():
        raise MissingArtifactError(f"{what} artifact not found: {path}")
    return path


def _load_policy_artifact(path: Path) -> bench.PolicyArtifact:
    ck = load_checkpoint(path)
    return bench.PolicyArtifact(spec=ck.spec, theta=ck.theta)


def _load_meta_artifact(path: Path, env: EnvConfig) -> bench.MetaArtifact:
    ck = load_checkpoint(path)
    extra = ck.extra
    if extra.get("algorithm") != "metaqctrl":
        raise ConfigError(f"checkpoint {path} was not produced by train-meta")
    mode = DisturbanceMode(extra.get("mode", env.model.mode.value))
    mcfg = MetaConfig(
        task_distribution=TaskDistribution(mode, ((0.0, 1.0),) * mode.n_channels),
        inner_lr=float(extra["inner_lr"]),
        gamma=float(extra["gamma"]),
        gae_lambda=float(extra["gae_lambda"]),
        episodes_per_rollout=int(extra["episodes_per_rollout"]),
    )
    adam = ck.adam if ck.adam is not None else AdamState.zeros(ck.theta.size)
    state = MetaState(
        spec=ck.spec, theta=ck.theta, adam=adam, config=mcfg,
        iteration=int(extra.get("iteration", 0)),
    )
    return bench.MetaArtifact(state=state, adapt_episodes=mcfg.episodes_per_rollout)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_pulse_optimize(args, algorithm: str) -> int:
    cfg = _load_config(args)
    gate, env = build_env_config(cfg)
    opt_cfg = build_grape_config(cfg, algorithm)
    out = _prepare_out(args, cfg)
    meta = _header_meta(cfg, args.seed)
    meta.update({"gate": gate, "algorithm": algorithm})

    optimize = grape_optimize if algorithm == "grape" else ga_optimize
    pulses, trace = optimize(
        env.model, env.target_gate, env.max_steps, env.dt, opt_cfg,
        rng=derive_rng(args.seed, "pulses"),
    )
    write_pulse_csv(out / "pulses.csv", pulses, env.model.n_qubits, meta)
    trace_rows = [{"iteration": i, "best_fidelity": float(f)} for i, f in enumerate(trace)]
    write_table(out / "fidelity_trace.csv", TRACE_FIELDS, trace_rows, meta)
    print(f"{algorithm}: gate={gate} best_fidelity={trace[-1]:.8f} iterations={len(trace) - 1}")
    return 0


def cmd_train_ppo(args) -> int:
    cfg = _load_config(args)
    gate, env = build_env_config(cfg)
    pcfg = build_ppo_config(cfg, env.model.mode)
    out = _prepare_out(args, cfg)
    meta = _header_meta(cfg, args.seed)
    meta.update({"gate": gate, "algorithm": "ppo"})

    result = ppo.ppo_train(env, pcfg, args.seed)
    extra = {
        "algorithm": "ppo",
        "gate": gate,
        "mode": env.model.mode.value,
        "train_stds": list(pcfg.train_task.stds),
        "env_steps": result.env_steps,
        "best_eval_fidelity": result.best_eval_fidelity,
    }
    save_checkpoint(out / "checkpoint.json", result.spec, result.theta_best, result.adam, extra)
    write_table(out / "curve.csv", PPO_CURVE_FIELDS, result.curve, meta)
    print(
        f"train-ppo: gate={gate} env_steps={result.env_steps} "
        f"best_eval_fidelity={result.best_eval_fidelity:.6f}"
    )
    return 0


def cmd_train_meta(args) -> int:
    cfg = _load_config(args)
    gate, env = build_env_config(cfg)
    mcfg = build_meta_config(cfg, env.model.mode)
    out = _prepare_out(args, cfg)
    meta = _header_meta(cfg, args.seed)
    meta.update({"gate": gate, "algorithm": "metaqctrl"})

    result = meta_train(env, mcfg, args.seed)
    extra = {
        "algorithm": "metaqctrl",
        "gate": gate,
        "mode": env.model.mode.value,
        "inner_lr": mcfg.inner_lr,
        "gamma": mcfg.gamma,
        "gae_lambda": mcfg.gae_lambda,
        "episodes_per_rollout": mcfg.episodes_per_rollout,
        "iteration": result.state.iteration,
        "best_eval_fidelity": result.best_eval_fidelity,
    }
    save_checkpoint(out / "checkpoint.json", result.state.spec, result.theta_best,
                    result.state.adam, extra)
    curve_fields = list(result.curve[0].keys()) if result.curve else ["meta_iter"]
    write_table(out / "curve.csv", curve_fields, result.curve, meta)
    print(
        f"train-meta: gate={gate} iterations={result.state.iteration} "
        f"best_eval_fidelity={result.best_eval_fidelity:.6f}"
    )
    return 0


def _experiment_pieces(args, what: str):
    cfg = _load_config(args)
    gate, env = build_env_config(cfg)
    algorithm = cfg.get_str("algorithm", "")
    if algorithm not in bench.ALGORITHMS:
        raise ConfigError(f"algorithm={algorithm!r}; expected one of {bench.ALGORITHMS}")
    artifact_path = _require_artifact(cfg.get("artifact"), what)
    if algorithm in ("grape", "ga"):
        artifact = bench.PulseArtifact(read_pulse_csv(artifact_path))
    elif algorithm == "ppo":
        artifact = _load_policy_artifact(artifact_path)
    else:
        artifact = _load_meta_artifact(artifact_path, env)
    return cfg, gate, env, algorithm, artifact


def cmd_sweep(args) -> int:
    cfg, gate, env, algorithm, artifact = _experiment_pieces(args, "sweep")
    etas = parse_eta_grid(cfg.get_str("sweep.etas", "0:1:0.05"))
    trials = cfg.get_int("sweep.trials", 100)
    out = _prepare_out(args, cfg)
    meta = _header_meta(cfg, args.seed)

    exp = bench.ExperimentConfig(
        gate=gate, algorithm=algorithm, env=env, etas=etas,
        trials=trials, seed=args.seed, workers=args.workers,
    )
    rows = bench.run_sweep(exp, artifact)
    bench.write_sweep_csv(out / "sweep.csv", rows, meta)
    write_dat(out / "sweep.dat", bench.SWEEP_FIELDS, [r.as_dict() for r in rows], meta)
    print(f"sweep: gate={gate} algorithm={algorithm} points={len(rows)} trials={trials}")
    return 0


def cmd_heatmap(args) -> int:
    cfg, gate, env, algorithm, artifact = _experiment_pieces(args, "heatmap")
    if env.model.mode is not DisturbanceMode.DRIFT_AND_CONTROL:
        raise ConfigError("heatmap requires disturbance.mode=dual")
    resolution = cfg.get_int("heatmap.resolution", 21)
    trials = cfg.get_int("heatmap.trials", 100)
    out = _prepare_out(args, cfg)
    meta = _header_meta(cfg, args.seed)

    exp = bench.ExperimentConfig(
        gate=gate, algorithm=algorithm, env=env, etas=(0.0,),
        trials=trials, seed=args.seed, workers=args.workers,
    )
    rows, ratios = bench.run_heatmap(exp, artifact, resolution=resolution)
    bench.write_heatmap_csv(out / "heatmap.csv", rows, ratios, meta)
    write_dat(out / "heatmap.dat", bench.HEATMAP_FIELDS, [r.as_dict() for r in rows], meta)
    print(
        f"heatmap: gate={gate} algorithm={algorithm} cells={len(rows)} "
        f"area<=1e-4: {ratios.fraction_1e4:.3f} area<=1e-5: {ratios.fraction_1e5:.3f}"
    )
    return 0


def cmd_eval(args) -> int:
    cfg, gate, env, algorithm, artifact = _experiment_pieces(args, "eval")
    trials = cfg.get_int("eval.trials", 100)
    mode = env.model.mode
    if mode is DisturbanceMode.COMMON:
        stds = (cfg.get_float("eval.eta", 0.0),)
    else:
        stds = (cfg.get_float("eval.eta0", 0.0), cfg.get_float("eval.etau", 0.0))
    task = TaskSpec(mode, stds)
    out = _prepare_out(args, cfg)
    meta = _header_meta(cfg, args.seed)

    exp = bench.ExperimentConfig(
        gate=gate, algorithm=algorithm, env=env, etas=stds[:1],
        trials=trials, seed=args.seed, workers=args.workers,
    )
    stats = bench.evaluate_artifact(exp, artifact, task)
    fields = ["gate", "algorithm"]
    row: dict = {"gate": gate, "algorithm": algorithm}
    if mode is DisturbanceMode.COMMON:
        fields.append("eta")
        row["eta"] = stds[0]
    else:
        fields += ["eta0", "etau"]
        row["eta0"], row["etau"] = stds
    fields += ["trial_count", "mean_max_fidelity", "std_max_fidelity", "mean_steps", "seed"]
    steps = float(env.max_steps) if algorithm in ("grape", "ga") else stats.mean_steps_to_max
    row.update(
        trial_count=stats.n_trials,
        mean_max_fidelity=stats.mean_max_fidelity,
        std_max_fidelity=stats.std_max_fidelity,
        mean_steps=steps,
        seed=args.seed,
    )
    write_table(out / "eval.csv", fields, [row], meta)
    print(
        f"eval: gate={gate} algorithm={algorithm} stds={stds} "
        f"mean_max_fidelity={stats.mean_max_fidelity:.6f} mean_steps={steps:.1f}"
    )
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qgatectrl",
        description="Robust quantum-gate pulse synthesis workbench",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="path to a key=value config file")
        p.add_argument("--seed", type=int, default=0, help="base seed for all randomness")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--workers", type=int, default=1,
                       help="worker processes for Monte Carlo evaluation")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config value (repeatable)")

    for name in ("grape", "ga", "train-ppo", "train-meta", "sweep", "heatmap", "eval"):
        add_common(sub.add_parser(name))
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "grape": lambda a: cmd_pulse_optimize(a, "grape"),
        "ga": lambda a: cmd_pulse_optimize(a, "ga"),
        "train-ppo": cmd_train_ppo,
        "train-meta": cmd_train_meta,
        "sweep": cmd_sweep,
        "heatmap": cmd_heatmap,
        "eval": cmd_eval,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MissingArtifactError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return 3
    except Exception:
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
