"""Dense complex linear algebra and quantum primitives (units: hbar = 1).

Conventions used throughout the package:

* An n-qubit operator is a dense (2**n, 2**n) complex128 ndarray; qubit 1 is
  the first tensor factor, so ``Z1Z2 = kron(sigma_z, sigma_z)``.
* A pulse schedule is piecewise constant: step j applies
  ``expm(-i * H_j * dt)`` and later steps multiply on the LEFT,
  ``U(T) = U_N @ ... @ U_1``.
* Multiplicative disturbances are truncated Gaussians,
  ``mu ~ clip(Normal(0, eta**2), -1, 1)``, resampled i.i.d. once per control
  step (piecewise constant over dt, like the controls).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

# ~100x machine-epsilon accumulation for dim <= 4 products: loud on logic
# bugs, quiet on roundoff.
HERMITIAN_ATOL = 1e-12
UNITARY_ATOL = 1e-10

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
_PAULI = {"X": SIGMA_X, "Y": SIGMA_Y, "Z": SIGMA_Z}

U_MIN = -5.0
U_MAX = 5.0


def max_hermitian_defect(m: np.ndarray) -> float:
    return float(np.max(np.abs(m - m.conj().T)))


def max_unitary_defect(m: np.ndarray) -> float:
    return float(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))))


def is_hermitian(m: np.ndarray, atol: float = HERMITIAN_ATOL) -> bool:
    return max_hermitian_defect(m) < atol


def is_unitary(m: np.ndarray, atol: float = UNITARY_ATOL) -> bool:
    return max_unitary_defect(m) < atol


def pauli_embed(axis: str, site: int, n_qubits: int) -> np.ndarray:
    """Pauli operator on one site of an n-qubit register.

    ``pauli_embed("X", j, n)`` is I x ... x sigma_x x ... x I with sigma_x in
    the j-th slot (1-based).
    """
    if axis not in _PAULI:
        raise ValueError(f"axis must be one of X, Y, Z, got {axis!r}")
    if not 1 <= site <= n_qubits:
        raise ValueError(f"site {site} out of range for {n_qubits} qubit(s)")
    op = np.array([[1]], dtype=np.complex128)
    for j in range(1, n_qubits + 1):
        op = np.kron(op, _PAULI[axis] if j == site else np.eye(2))
    return op


class DisturbanceMode(enum.Enum):
    """How disturbance channels couple into the Hamiltonian.

    COMMON: one mu(t) scales the whole Hamiltonian, H = (1+mu)(drift + controls).
    DRIFT_AND_CONTROL: mu0(t) scales the drift and mu_u(t) the control sum,
    H = (1+mu0)*drift + (1+mu_u)*controls.
    """

    COMMON = "common"
    DRIFT_AND_CONTROL = "drift_and_control"

    @property
    def n_channels(self) -> int:
        return 1 if self is DisturbanceMode.COMMON else 2


@dataclass(frozen=True)
class SystemModel:
    """Hamiltonian family: drift term, control operators, disturbance coupling."""

    n_qubits: int
    drift: np.ndarray
    control_ops: tuple[np.ndarray, ...]
    mode: DisturbanceMode = DisturbanceMode.COMMON

    def __post_init__(self):
        if self.n_qubits not in (1, 2):
            raise ValueError("only 1- and 2-qubit systems are supported")
        dim = 2**self.n_qubits
        if len(self.control_ops) != 2 * self.n_qubits:
            raise ValueError(
                f"expected {2 * self.n_qubits} control operators, got {len(self.control_ops)}"
            )
        for op in (self.drift, *self.control_ops):
            if op.shape != (dim, dim):
                raise ValueError(f"operator shape {op.shape} != {(dim, dim)}")
            if not is_hermitian(op):
                raise ValueError("drift and control operators must be Hermitian")

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    @property
    def n_controls(self) -> int:
        return 2 * self.n_qubits


def single_qubit_model(mode: DisturbanceMode = DisturbanceMode.COMMON) -> SystemModel:
    """sigma_z drift with sigma_x, sigma_y controls."""
    return SystemModel(1, SIGMA_Z.copy(), (SIGMA_X.copy(), SIGMA_Y.copy()), mode)


def two_qubit_model(mode: DisturbanceMode = DisturbanceMode.COMMON) -> SystemModel:
    """Z1Z2 coupling drift with per-qubit X and Y controls (X1, X2, Y1, Y2)."""
    drift = pauli_embed("Z", 1, 2) @ pauli_embed("Z", 2, 2)
    ops = tuple(pauli_embed(ax, j, 2) for ax in ("X", "Y") for j in (1, 2))
    return SystemModel(2, drift, ops, mode)


@dataclass(frozen=True)
class DisturbanceSpec:
    """Per-channel truncated-Gaussian stddevs; realizations clipped to [-1, 1]."""

    stds: tuple[float, ...]

    def __post_init__(self):
        if len(self.stds) not in (1, 2):
            raise ValueError("expected 1 or 2 disturbance channels")
        for eta in self.stds:
            if not 0.0 <= eta <= 1.0:
                raise ValueError(f"disturbance stddev {eta} outside [0, 1]")

    @property
    def n_channels(self) -> int:
        return len(self.stds)


def sample_disturbance(eta: float, rng: np.random.Generator) -> float:
    """One draw of clip(Normal(0, eta**2), -1, 1); eta == 0 gives exactly 0."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must be in [0, 1], got {eta}")
    if eta == 0.0:
        return 0.0
    return float(min(max(eta * rng.standard_normal(), -1.0), 1.0))


def sample_disturbances(spec: DisturbanceSpec, rng: np.random.Generator) -> np.ndarray:
    return np.array([sample_disturbance(eta, rng) for eta in spec.stds])


def build_hamiltonian(
    model: SystemModel, controls: np.ndarray, disturbances: np.ndarray
) -> np.ndarray:
    """Assemble the disturbed Hamiltonian for one control step.

    COMMON mode:            H = (1 + mu) * (drift + sum_k u_k C_k)
    DRIFT_AND_CONTROL mode: H = (1 + mu0) * drift + (1 + mu_u) * sum_k u_k C_k
    """
    controls = np.asarray(controls, dtype=float)
    disturbances = np.asarray(disturbances, dtype=float)
    if controls.shape != (model.n_controls,):
        raise ValueError(f"expected {model.n_controls} control amplitudes, got {controls.shape}")
    if disturbances.shape != (model.mode.n_channels,):
        raise ValueError(
            f"expected {model.mode.n_channels} disturbance realization(s), got {disturbances.shape}"
        )
    ctrl_sum = np.zeros_like(model.drift)
    for u, op in zip(controls, model.control_ops):
        ctrl_sum += u * op
    if model.mode is DisturbanceMode.COMMON:
        return (1.0 + disturbances[0]) * (model.drift + ctrl_sum)
    return (1.0 + disturbances[0]) * model.drift + (1.0 + disturbances[1]) * ctrl_sum


def propagator(hamiltonian: np.ndarray, dt: float) -> np.ndarray:
    """Exact unitary expm(-i * H * dt) via Hermitian eigendecomposition."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    defect = max_hermitian_defect(hamiltonian)
    if not defect < HERMITIAN_ATOL * max(1.0, float(np.max(np.abs(hamiltonian)))):
        raise ArithmeticError(f"matrix is not Hermitian (defect {defect:.3e})")
    evals, vecs = np.linalg.eigh(hamiltonian)
    phases = np.exp(-1j * evals * dt)
    return (vecs * phases) @ vecs.conj().T


@dataclass(frozen=True)
class ControlPulseSequence:
    """Piecewise-constant schedule: amplitudes[j, k] drives control k in step j."""

    dt: float
    amplitudes: np.ndarray
    u_min: float = U_MIN
    u_max: float = U_MAX

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.amplitudes.ndim != 2:
            raise ValueError("amplitudes must be a (n_steps, n_controls) matrix")
        if np.any(self.amplitudes < self.u_min) or np.any(self.amplitudes > self.u_max):
            raise ValueError(f"amplitudes outside [{self.u_min}, {self.u_max}]")

    @property
    def n_steps(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def n_controls(self) -> int:
        return self.amplitudes.shape[1]

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt


def step_propagators(
    model: SystemModel, pulses: ControlPulseSequence, disturbance_trace: np.ndarray
) -> np.ndarray:
    """All per-step unitaries U_j as a (n_steps, dim, dim) stack (batched eigh)."""
    n = pulses.n_steps
    disturbance_trace = np.asarray(disturbance_trace, dtype=float)
    if disturbance_trace.shape != (n, model.mode.n_channels):
        raise ValueError(
            f"disturbance trace shape {disturbance_trace.shape} != "
            f"{(n, model.mode.n_channels)}"
        )
    hs = np.empty((n, model.dim, model.dim), dtype=np.complex128)
    for j in range(n):
        hs[j] = build_hamiltonian(model, pulses.amplitudes[j], disturbance_trace[j])
    evals, vecs = np.linalg.eigh(hs)
    phases = np.exp(-1j * evals * pulses.dt)
    return (vecs * phases[:, None, :]) @ np.conj(np.swapaxes(vecs, -1, -2))


def evolve_sequence(
    model: SystemModel, pulses: ControlPulseSequence, disturbance_trace: np.ndarray
) -> np.ndarray:
    """Final gate U(T) = U_N @ ... @ U_1 for the given disturbance realizations."""
    us = step_propagators(model, pulses, disturbance_trace)
    total = np.eye(model.dim, dtype=np.complex128)
    for u in us:
        total = u @ total
    return total


def gate_fidelity(u: np.ndarray, u_target: np.ndarray, n_qubits: int) -> float:
    """F = |Tr(U_target^dag U) / 2**n|**2, global-phase invariant, in [0, 1]."""
    dim = 2**n_qubits
    if u.shape != (dim, dim) or u_target.shape != (dim, dim):
        raise ValueError(f"expected {dim}x{dim} unitaries, got {u.shape} and {u_target.shape}")
    overlap = np.vdot(u_target, u) / dim  # Tr(U_target^dag U) / 2**n
    # roundoff on exactly-matching unitaries can push |overlap|^2 a few ulp past 1
    return float(min(max(overlap.real**2 + overlap.imag**2, 0.0), 1.0))
