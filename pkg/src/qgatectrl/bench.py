"""Experiment harness: disturbance sweeps, dual-channel heatmaps, area ratios,
and cross-algorithm comparison tables.

Grid points are independent jobs fanned out over a process pool. Every job
derives its random streams from (seed, gate, algorithm, grid coordinates), so
the emitted tables are identical for any worker count or scheduling order.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .csvio import read_table, write_table
from .env import EnvConfig, TaskSpec
from .grape import evaluate_open_loop
from .metarl import MetaState, deploy_adapt
from .nnet import MlpSpec
from .qcore import ControlPulseSequence, DisturbanceMode, DisturbanceSpec, single_qubit_model, two_qubit_model
from .rollout import EvalStats, evaluate_policy
from .seeding import derive_rng

SWEEP_FIELDS = [
    "gate", "algorithm", "eta", "trial_count",
    "mean_max_fidelity", "std_max_fidelity", "mean_steps", "seed",
]
HEATMAP_FIELDS = ["gate", "algorithm", "eta0", "etau", "mean_max_fidelity", "mean_infidelity"]

GATES = ("hadamard", "pi8", "phase", "cnot")
ALGORITHMS = ("grape", "ga", "ppo", "metaqctrl")

# per-gate experiment defaults: (n_qubits, horizon T, steps N, epsilon)
GATE_DEFAULTS = {
    "hadamard": (1, 1.6, 40, 1e-4),
    "pi8": (1, 1.6, 40, 1e-4),
    "phase": (1, 1.6, 40, 1e-4),
    "cnot": (2, 2.0, 50, 1e-3),
}


def target_gate(name: str) -> np.ndarray:
    """Exact constant target unitaries."""
    if name == "hadamard":
        return np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2)
    if name == "pi8":
        return np.diag([1.0, np.exp(1j * np.pi / 4)]).astype(np.complex128)
    if name == "phase":
        return np.diag([1.0, 1.0j]).astype(np.complex128)
    if name == "cnot":
        return np.array(
            [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=np.complex128
        )
    raise ValueError(f"unknown gate {name!r}; expected one of {GATES}")


def default_env_config(gate: str, mode: DisturbanceMode = DisturbanceMode.COMMON) -> EnvConfig:
    """Paper-protocol environment for a named gate (overridable field by field)."""
    n_qubits, horizon, n_steps, epsilon = GATE_DEFAULTS[gate]
    model = single_qubit_model(mode) if n_qubits == 1 else two_qubit_model(mode)
    return EnvConfig(
        model=model,
        target_gate=target_gate(gate),
        horizon=horizon,
        max_steps=n_steps,
        epsilon=epsilon,
        disturbance=DisturbanceSpec((0.0,) * mode.n_channels),
    )


def default_eta_grid(step: float = 0.05) -> tuple[float, ...]:
    return tuple(np.round(np.arange(0.0, 1.0 + step / 2, step), 10).tolist())


# ---------------------------------------------------------------------------
# artifacts under evaluation
# ---------------------------------------------------------------------------

@dataclass
class PulseArtifact:
    pulses: ControlPulseSequence


@dataclass
class PolicyArtifact:
    spec: MlpSpec
    theta: np.ndarray


@dataclass
class MetaArtifact:
    state: MetaState
    adapt_episodes: int = 10
    adapt_steps: int = 1


Artifact = PulseArtifact | PolicyArtifact | MetaArtifact


@dataclass(frozen=True)
class ExperimentConfig:
    gate: str
    algorithm: str
    env: EnvConfig
    etas: tuple[float, ...]
    trials: int = 100
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.gate not in GATES:
            raise ValueError(f"unknown gate {self.gate!r}")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


@dataclass(frozen=True)
class SweepRow:
    gate: str
    algorithm: str
    eta: float
    trial_count: int
    mean_max_fidelity: float
    std_max_fidelity: float
    mean_steps: float
    seed: int

    def as_dict(self) -> dict:
        return {f: getattr(self, f) for f in SWEEP_FIELDS}


@dataclass(frozen=True)
class HeatmapRow:
    gate: str
    algorithm: str
    eta0: float
    etau: float
    mean_max_fidelity: float

    @property
    def mean_infidelity(self) -> float:
        return 1.0 - self.mean_max_fidelity

    def as_dict(self) -> dict:
        d = {f: getattr(self, f) for f in HEATMAP_FIELDS[:-1]}
        d["mean_infidelity"] = self.mean_infidelity
        return d


@dataclass(frozen=True)
class AreaRatios:
    """Fractions of grid cells at or below the key infidelity thresholds."""

    fraction_1e4: float
    fraction_1e5: float

    def __post_init__(self):
        if not 0.0 <= self.fraction_1e5 <= self.fraction_1e4 <= 1.0:
            raise ValueError("need 0 <= fraction(1e-5) <= fraction(1e-4) <= 1")


def area_ratios(fidelities: np.ndarray) -> AreaRatios:
    infidelity = 1.0 - np.asarray(fidelities, dtype=float)
    return AreaRatios(
        fraction_1e4=float(np.mean(infidelity <= 1e-4)),
        fraction_1e5=float(np.mean(infidelity <= 1e-5)),
    )


# ---------------------------------------------------------------------------
# evaluation jobs
# ---------------------------------------------------------------------------

def evaluate_artifact(config: ExperimentConfig, artifact: Artifact, task: TaskSpec) -> EvalStats:
    """Monte Carlo statistics for one grid point; streams derive from the
    (seed, gate, algorithm, task stds) tokens only."""
    tokens = (config.gate, config.algorithm, *[float(s) for s in task.stds])
    rng = derive_rng(config.seed, "bench", *tokens)
    if isinstance(artifact, PulseArtifact):
        return evaluate_open_loop(
            artifact.pulses, config.env.model, config.env.target_gate, task, config.trials, rng
        )
    if isinstance(artifact, PolicyArtifact):
        return evaluate_policy(config.env, artifact.spec, artifact.theta, task, config.trials, rng)
    if isinstance(artifact, MetaArtifact):
        adapt_rng = derive_rng(config.seed, "bench-adapt", *tokens)
        theta = deploy_adapt(
            artifact.state, config.env, task, artifact.adapt_episodes, adapt_rng,
            n_steps=artifact.adapt_steps,
        )
        return evaluate_policy(config.env, artifact.state.spec, theta, task, config.trials, rng)
    raise TypeError(f"unsupported artifact {type(artifact)!r}")


def _sweep_job(args) -> SweepRow:
    config, artifact, eta = args
    task = TaskSpec(config.env.model.mode, (eta,) * config.env.model.mode.n_channels)
    stats = evaluate_artifact(config, artifact, task)
    # full fixed schedules exhaust the step budget by construction
    steps = float(config.env.max_steps) if config.algorithm in ("grape", "ga") else stats.mean_steps_to_max
    return SweepRow(
        gate=config.gate,
        algorithm=config.algorithm,
        eta=eta,
        trial_count=stats.n_trials,
        mean_max_fidelity=stats.mean_max_fidelity,
        std_max_fidelity=stats.std_max_fidelity,
        mean_steps=steps,
        seed=config.seed,
    )


def _heatmap_job(args) -> HeatmapRow:
    config, artifact, eta0, etau = args
    task = TaskSpec(DisturbanceMode.DRIFT_AND_CONTROL, (eta0, etau))
    stats = evaluate_artifact(config, artifact, task)
    return HeatmapRow(
        gate=config.gate,
        algorithm=config.algorithm,
        eta0=eta0,
        etau=etau,
        mean_max_fidelity=stats.mean_max_fidelity,
    )


def _run_jobs(fn, jobs: list, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def run_sweep(config: ExperimentConfig, artifact: Artifact) -> list[SweepRow]:
    """Mean/max-fidelity statistics per disturbance level on the eta grid."""
    _check_artifact(config.algorithm, artifact)
    jobs = [(config, artifact, float(eta)) for eta in config.etas]
    return _run_jobs(_sweep_job, jobs, config.workers)


def run_heatmap(
    config: ExperimentConfig, artifact: Artifact, resolution: int = 21
) -> tuple[list[HeatmapRow], AreaRatios]:
    """Dual-disturbance grid over [0,1]^2 plus its threshold area ratios."""
    if config.env.model.mode is not DisturbanceMode.DRIFT_AND_CONTROL:
        raise ValueError("heatmaps need a model with drift-and-control disturbance channels")
    _check_artifact(config.algorithm, artifact)
    grid = np.round(np.linspace(0.0, 1.0, resolution), 10)
    jobs = [(config, artifact, float(e0), float(eu)) for e0 in grid for eu in grid]
    rows = _run_jobs(_heatmap_job, jobs, config.workers)
    ratios = area_ratios(np.array([row.mean_max_fidelity for row in rows]))
    return rows, ratios


def _check_artifact(algorithm: str, artifact: Artifact) -> None:
    expected = {
        "grape": PulseArtifact, "ga": PulseArtifact,
        "ppo": PolicyArtifact, "metaqctrl": MetaArtifact,
    }[algorithm]
    if not isinstance(artifact, expected):
        raise ValueError(f"algorithm {algorithm!r} needs a {expected.__name__}")


# ---------------------------------------------------------------------------
# comparison report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PairSummary:
    first: str
    second: str
    deltas: tuple[float, ...]   # fidelity(first) - fidelity(second), per eta
    mean_gap: float
    max_gap: float
    gap_at_eta_1: float | None  # headline number when 1.0 is on the grid


@dataclass(frozen=True)
class ComparisonReport:
    etas: tuple[float, ...]
    pairs: tuple[PairSummary, ...]

    def pair(self, first: str, second: str) -> PairSummary:
        for p in self.pairs:
            if (p.first, p.second) == (first, second):
                return p
        raise KeyError(f"no comparison for ({first}, {second})")


def compare_report(results: dict[str, list[SweepRow]]) -> ComparisonReport:
    """Per-eta fidelity deltas between every ordered algorithm pair."""
    if len(results) < 2:
        raise ValueError("need at least two algorithms to compare")
    grids = {name: tuple(row.eta for row in rows) for name, rows in results.items()}
    reference = next(iter(grids.values()))
    for name, grid in grids.items():
        if grid != reference:
            raise ValueError(f"eta grid of {name!r} does not match the others")
    names = list(results)
    pairs = []
    for first in names:
        for second in names:
            if first == second:
                continue
            deltas = tuple(
                a.mean_max_fidelity - b.mean_max_fidelity
                for a, b in zip(results[first], results[second])
            )
            gap_at_1 = None
            if 1.0 in reference:
                gap_at_1 = deltas[reference.index(1.0)]
            pairs.append(
                PairSummary(
                    first=first,
                    second=second,
                    deltas=deltas,
                    mean_gap=float(np.mean(deltas)),
                    max_gap=float(np.max(deltas)),
                    gap_at_eta_1=gap_at_1,
                )
            )
    return ComparisonReport(etas=reference, pairs=tuple(pairs))


# ---------------------------------------------------------------------------
# table IO
# ---------------------------------------------------------------------------

def write_sweep_csv(path, rows: list[SweepRow], meta: dict[str, str] | None = None) -> None:
    write_table(path, SWEEP_FIELDS, [r.as_dict() for r in rows], meta)


def read_sweep_csv(path) -> tuple[list[SweepRow], dict[str, str]]:
    _, raw, meta = read_table(path)
    rows = [
        SweepRow(
            gate=r["gate"],
            algorithm=r["algorithm"],
            eta=float(r["eta"]),
            trial_count=int(r["trial_count"]),
            mean_max_fidelity=float(r["mean_max_fidelity"]),
            std_max_fidelity=float(r["std_max_fidelity"]),
            mean_steps=float(r["mean_steps"]),
            seed=int(r["seed"]),
        )
        for r in raw
    ]
    return rows, meta


def write_heatmap_csv(
    path, rows: list[HeatmapRow], ratios: AreaRatios, meta: dict[str, str] | None = None
) -> None:
    trailer = {
        "area_fraction_1e-4": repr(ratios.fraction_1e4),
        "area_fraction_1e-5": repr(ratios.fraction_1e5),
    }
    write_table(path, HEATMAP_FIELDS, [r.as_dict() for r in rows], meta, trailer=trailer)


def read_heatmap_csv(path) -> tuple[list[HeatmapRow], AreaRatios, dict[str, str]]:
    _, raw, meta = read_table(path)
    rows = [
        HeatmapRow(
            gate=r["gate"],
            algorithm=r["algorithm"],
            eta0=float(r["eta0"]),
            etau=float(r["etau"]),
            mean_max_fidelity=float(r["mean_max_fidelity"]),
        )
        for r in raw
    ]
    ratios = AreaRatios(
        fraction_1e4=float(meta["area_fraction_1e-4"]),
        fraction_1e5=float(meta["area_fraction_1e-5"]),
    )
    return rows, ratios, meta
