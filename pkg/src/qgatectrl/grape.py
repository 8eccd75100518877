"""Model-based pulse optimizers: GRAPE (exact gradients) and naive gradient
ascent (forward finite differences), plus open-loop Monte Carlo evaluation.

Both optimizers maximize the nominal (disturbance-free) gate fidelity over a
piecewise-constant schedule, projecting amplitudes back into the actuator
bounds after every update. Robustness is then measured by executing the fixed
schedule open loop under sampled disturbances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import TaskSpec
from .qcore import (
    ControlPulseSequence,
    SystemModel,
    U_MAX,
    U_MIN,
    build_hamiltonian,
    gate_fidelity,
    propagator,
    sample_disturbances,
)
from .rollout import EvalStats


@dataclass(frozen=True)
class GrapeConfig:
    iterations: int = 500
    learning_rate: float = 0.2
    fidelity_tol: float = 1.0 - 1e-6   # stop early once best F reaches this
    fd_step: float = 1e-4              # GA forward-difference step
    u_min: float = U_MIN
    u_max: float = U_MAX

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")


def _nominal_propagators(model: SystemModel, amplitudes: np.ndarray, dt: float):
    """Eigendecompositions and unitaries for every step at mu = 0."""
    n = amplitudes.shape[0]
    hs = np.empty((n, model.dim, model.dim), dtype=np.complex128)
    for j in range(n):
        h = model.drift.copy()
        for u, op in zip(amplitudes[j], model.control_ops):
            h += u * op
        hs[j] = h
    evals, vecs = np.linalg.eigh(hs)
    phases = np.exp(-1j * evals * dt)
    us = (vecs * phases[:, None, :]) @ np.conj(np.swapaxes(vecs, -1, -2))
    return evals, vecs, us


def nominal_fidelity(
    model: SystemModel, target: np.ndarray, amplitudes: np.ndarray, dt: float
) -> float:
    """Fidelity of the schedule on the disturbance-free model."""
    _, _, us = _nominal_propagators(model, amplitudes, dt)
    total = np.eye(model.dim, dtype=np.complex128)
    for u in us:
        total = u @ total
    return gate_fidelity(total, target, model.n_qubits)


def fidelity_and_gradient(
    model: SystemModel, target: np.ndarray, amplitudes: np.ndarray, dt: float
) -> tuple[float, np.ndarray]:
    """Exact dF/du for every amplitude via the eigenbasis Frechet derivative.

    With H = V diag(lam) V^dag, the directional derivative of expm(-i H dt)
    along a control operator C is V (Phi * (V^dag C V)) V^dag, where
    Phi[p,q] = -i dt exp(-i (lam_p+lam_q) dt / 2) sinc((lam_p-lam_q) dt / 2).
    The sinc form is exact and stable for degenerate eigenvalue pairs.
    """
    n_steps, n_controls = amplitudes.shape
    dim = model.dim
    evals, vecs, us = _nominal_propagators(model, amplitudes, dt)

    prefix = np.empty((n_steps + 1, dim, dim), dtype=np.complex128)
    prefix[0] = np.eye(dim)
    for j in range(n_steps):
        prefix[j + 1] = us[j] @ prefix[j]
    suffix = np.empty((n_steps + 1, dim, dim), dtype=np.complex128)
    suffix[n_steps] = np.eye(dim)
    for j in range(n_steps - 1, -1, -1):
        suffix[j] = suffix[j + 1] @ us[j]

    overlap = np.trace(target.conj().T @ prefix[n_steps]) / dim
    fid = float(min(max(abs(overlap) ** 2, 0.0), 1.0))

    target_dag = target.conj().T
    grad = np.empty((n_steps, n_controls))
    for j in range(n_steps):
        lam = evals[j]
        diff = lam[:, None] - lam[None, :]
        # sinc(x) = sin(x)/x with sinc(0) = 1; np.sinc is the normalized variant
        phi = (-1j * dt) * np.exp(-0.5j * (lam[:, None] + lam[None, :]) * dt) * np.sinc(
            diff * dt / (2.0 * np.pi)
        )
        v = vecs[j]
        w = v.conj().T @ (prefix[j] @ target_dag @ suffix[j + 1]) @ v
        for k, op in enumerate(model.control_ops):
            c_tilde = v.conj().T @ op @ v
            d_overlap = np.sum(w.T * phi * c_tilde) / dim
            grad[j, k] = 2.0 * (overlap.conjugate() * d_overlap).real
    return fid, grad


def finite_difference_gradient(
    model: SystemModel, target: np.ndarray, amplitudes: np.ndarray, dt: float, h: float
) -> tuple[float, np.ndarray]:
    """Naive forward differences: one full fidelity evaluation per amplitude."""
    base = nominal_fidelity(model, target, amplitudes, dt)
    grad = np.empty_like(amplitudes)
    probe = amplitudes.copy()
    for j in range(amplitudes.shape[0]):
        for k in range(amplitudes.shape[1]):
            probe[j, k] = amplitudes[j, k] + h
            grad[j, k] = (nominal_fidelity(model, target, probe, dt) - base) / h
            probe[j, k] = amplitudes[j, k]
    return base, grad


def _ascend(amplitudes, fid_fn, grad_fn, config: GrapeConfig):
    """Projected gradient ascent with backtracking on the step size.

    Returns (best amplitudes, best fidelity, best-so-far trace). The trace has
    one entry for the initial schedule plus one per completed iteration.
    """
    u = np.clip(amplitudes, config.u_min, config.u_max)
    f = fid_fn(u)
    best_u, best_f = u.copy(), f
    trace = [best_f]
    step = config.learning_rate
    for _ in range(config.iterations):
        if best_f >= config.fidelity_tol:
            break
        g = grad_fn(u)
        if not np.all(np.isfinite(g)):
            raise ArithmeticError("non-finite pulse gradient")
        improved = False
        while step >= 1e-14:
            cand = np.clip(u + step * g, config.u_min, config.u_max)
            f_cand = fid_fn(cand)
            if f_cand > f:
                u, f = cand, f_cand
                step = min(step * 1.25, 1e3 * config.learning_rate)
                improved = True
                break
            step *= 0.5
        if f > best_f:
            best_u, best_f = u.copy(), f
        trace.append(best_f)
        if not improved:
            break  # step size collapsed: stationary (or projected) point
    return best_u, best_f, np.array(trace)


def _init_amplitudes(model, n_steps, init_pulses, rng, config):
    if init_pulses is not None:
        amps = np.asarray(init_pulses, dtype=float)
        if amps.shape != (n_steps, model.n_controls):
            raise ValueError(f"init pulses shape {amps.shape} != {(n_steps, model.n_controls)}")
        return amps.copy()
    # uninformative start over the whole actuator range
    return rng.uniform(config.u_min, config.u_max, size=(n_steps, model.n_controls))


def grape_optimize(
    model: SystemModel,
    target: np.ndarray,
    n_steps: int,
    dt: float,
    config: GrapeConfig,
    init_pulses: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[ControlPulseSequence, np.ndarray]:
    """Exact-gradient pulse optimization on the nominal model."""
    amps = _init_amplitudes(model, n_steps, init_pulses, rng, config)
    fid = lambda u: nominal_fidelity(model, target, u, dt)
    grad = lambda u: fidelity_and_gradient(model, target, u, dt)[1]
    best_u, _, trace = _ascend(amps, fid, grad, config)
    return ControlPulseSequence(dt, best_u, config.u_min, config.u_max), trace


def ga_optimize(
    model: SystemModel,
    target: np.ndarray,
    n_steps: int,
    dt: float,
    config: GrapeConfig,
    init_pulses: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[ControlPulseSequence, np.ndarray]:
    """Same ascent loop as GRAPE but with forward finite-difference gradients."""
    amps = _init_amplitudes(model, n_steps, init_pulses, rng, config)
    fid = lambda u: nominal_fidelity(model, target, u, dt)
    grad = lambda u: finite_difference_gradient(model, target, u, dt, config.fd_step)[1]
    best_u, _, trace = _ascend(amps, fid, grad, config)
    return ControlPulseSequence(dt, best_u, config.u_min, config.u_max), trace


def evaluate_open_loop(
    pulses: ControlPulseSequence,
    model: SystemModel,
    target: np.ndarray,
    task: TaskSpec,
    n_trials: int,
    rng: np.random.Generator,
) -> EvalStats:
    """Execute a fixed schedule under sampled disturbances, n_trials times.

    Per trial, records the maximum fidelity along the trajectory and the
    (1-based) step index that achieved it.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    if task.mode is not model.mode:
        raise ValueError("task mode does not match the model")
    spec = task.disturbance()
    streams = rng.spawn(n_trials)
    max_f = np.empty(n_trials)
    steps = np.empty(n_trials, dtype=int)
    for i, stream in enumerate(streams):
        u_total = np.eye(model.dim, dtype=np.complex128)
        best, best_step = -1.0, 1
        for j in range(pulses.n_steps):
            mu = sample_disturbances(spec, stream)
            h = build_hamiltonian(model, pulses.amplitudes[j], mu)
            u_total = propagator(h, pulses.dt) @ u_total
            f = gate_fidelity(u_total, target, model.n_qubits)
            if f > best:
                best, best_step = f, j + 1
        max_f[i] = best
        steps[i] = best_step
    # a fixed schedule has no success/termination event
    return EvalStats(max_fidelities=max_f, steps_to_max=steps, succeeded=np.zeros(n_trials, bool))
