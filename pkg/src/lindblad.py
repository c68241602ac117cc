"""Lindblad jump operators, the memory-kernel + dissipator propagation and a
dense RK4 Lindblad integrator used as a reference."""

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from src.core import (
    DensityMatrix,
    Superoperator,
    Trajectory,
    commutator_superoperator,
    vec,
)
from src.exceptions import InputValidationError, NumericalError
from src.ttm import MemoryKernel

log = logging.getLogger(__name__)

RK4_HALVING_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class JumpOperator:
    """Jump operator ``L`` (units fs^-1/2); need not be Hermitian."""

    matrix: np.ndarray
    label: str = ""

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise InputValidationError(f"Jump operator must be square, got shape {matrix.shape}")
        if not np.all(np.isfinite(matrix)):
            raise InputValidationError(f"Jump operator '{self.label}' has non-finite entries")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def lowering(cls, dim: int, target: int, source: int, timescale_fs: float, label: str = "") -> "JumpOperator":
        """``gamma |target><source|`` with ``gamma^2 = 1 / timescale_fs``."""
        if not timescale_fs > 0:
            raise InputValidationError(f"Decay timescale must be positive, got {timescale_fs}")
        matrix = np.zeros((dim, dim), dtype=complex)
        matrix[target, source] = np.sqrt(1.0 / timescale_fs)
        return cls(matrix, label or f"decay {source}->{target} ({timescale_fs:g} fs)")


def _check_jumps(jumps: Sequence[JumpOperator], dim: int) -> None:
    for jump in jumps:
        if jump.dim != dim:
            raise InputValidationError(f"Dimension mismatch: jump '{jump.label}' has d={jump.dim}, state d={dim}")


def dissipator(jumps: Sequence[JumpOperator], rho) -> np.ndarray:
    """``sum_j (L_j rho L_j^dagger - 1/2 {L_j^dagger L_j, rho})``."""
    rho = rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    _check_jumps(jumps, rho.shape[0])
    out = np.zeros_like(rho, dtype=complex)
    for jump in jumps:
        L = jump.matrix
        LdL = L.conj().T @ L
        out += L @ rho @ L.conj().T - 0.5 * (LdL @ rho + rho @ LdL)
    return out


def dissipator_superoperator(jumps: Sequence[JumpOperator], dim: int) -> Superoperator:
    """Matrix of :func:`dissipator` acting on vectorized density matrices."""
    _check_jumps(jumps, dim)
    eye = np.eye(dim, dtype=complex)
    total = Superoperator.zeros(dim)
    for jump in jumps:
        L = jump.matrix
        LdL = L.conj().T @ L
        total = (
            total
            + Superoperator.from_pair(L, L.conj())
            - Superoperator.from_pair(LdL, eye).scaled(0.5)
            - Superoperator.from_pair(eye, LdL.T).scaled(0.5)
        )
    return total


def hybrid_propagate(
    kernel: MemoryKernel,
    E0dt: Superoperator,
    jumps: Sequence[JumpOperator],
    rho0: DensityMatrix,
    n_steps: int,
    label: str = "hybrid",
) -> Trajectory:
    """Propagates the memory kernel together with an explicit-Euler dissipator.

    ``rho_n = E0 rho_{n-1} + sum_{j=1}^{min(n,L)} K_j rho_{n-j} dt^2 + D(rho_{n-1}) dt``

    ``E0dt`` must be the base step of the kernel's mode
    (:func:`src.ttm.kernel_base_step`); for ``interaction`` kernels that is
    the bare map.
    """
    if n_steps < 1:
        raise InputValidationError(f"n_steps must be >= 1, got {n_steps}")
    dim = kernel.dim
    if E0dt.dim != dim or rho0.dim != dim:
        raise InputValidationError(
            f"Dimension mismatch: kernel d={dim}, E0 d={E0dt.dim}, state d={rho0.dim}"
        )
    dt = kernel.dt
    kernels = kernel.as_array() * dt**2
    propagator = E0dt.data
    if jumps:
        propagator = propagator + dissipator_superoperator(jumps, dim).data * dt

    states = np.zeros((n_steps + 1, dim * dim), dtype=complex)
    states[0] = vec(rho0.data)
    for n in range(1, n_steps + 1):
        acc = propagator @ states[n - 1]
        for j in range(1, min(n, kernel.mem_len) + 1):
            acc += kernels[j - 1] @ states[n - j]
        states[n] = acc
    if not np.all(np.isfinite(states)):
        raise NumericalError(f"Propagation '{label}' produced non-finite values")
    trajectory = Trajectory.from_vectors(dt, states, dim, label=label)
    log.debug(f"Propagated '{label}' for {n_steps} steps, trace drift {trajectory.trace_drift():.2e}")
    return trajectory


def _rk4_step(generator: np.ndarray, state: np.ndarray, h: float) -> np.ndarray:
    k1 = generator @ state
    k2 = generator @ (state + 0.5 * h * k1)
    k3 = generator @ (state + 0.5 * h * k2)
    k4 = generator @ (state + h * k3)
    return state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def lindblad_reference(
    H0: np.ndarray,
    jumps: Sequence[JumpOperator],
    rho0: DensityMatrix,
    dt: float,
    n_steps: int,
    substeps: int = 1,
    tol: float = RK4_HALVING_TOL,
) -> Trajectory:
    """Integrates ``d rho/dt = -i [H0, rho] + D(rho)`` with classic RK4.

    The step-halving check runs on the whole one-interval propagator.

    Args:
        H0: Hermitian system Hamiltonian (fs^-1).
        jumps: Jump operators of the dissipator.
        rho0: Initial state.
        dt: Output spacing in fs.
        n_steps: Number of output steps.
        substeps: RK4 steps per output interval.
        tol: Allowed step-halving disagreement of the interval propagator.

    Raises:
        NumericalError: If halving the RK4 step changes the interval
            propagator by more than ``tol``, or the states become non-finite.
    """
    if not dt > 0:
        raise InputValidationError(f"Time step must be positive, got {dt}")
    if n_steps < 1 or substeps < 1:
        raise InputValidationError(f"n_steps and substeps must be >= 1, got {n_steps}, {substeps}")
    dim = rho0.dim
    generator = -1j * commutator_superoperator(H0).data
    if generator.shape[0] != dim * dim:
        raise InputValidationError(f"Dimension mismatch: H0 d={int(np.sqrt(generator.shape[0]))}, state d={dim}")
    if jumps:
        generator = generator + dissipator_superoperator(jumps, dim).data
    h = dt / substeps

    # columns of the identity carry every basis input through one interval
    coarse = np.eye(dim * dim, dtype=complex)
    for _ in range(substeps):
        coarse = _rk4_step(generator, coarse, h)
    fine = np.eye(dim * dim, dtype=complex)
    for _ in range(2 * substeps):
        fine = _rk4_step(generator, fine, 0.5 * h)
    halving_err = float(np.max(np.abs(coarse - fine)))
    if not halving_err <= tol:
        raise NumericalError(
            f"RK4 step-halving disagreement {halving_err:.2e} exceeds {tol:.1e}; "
            f"use a smaller dt or more substeps (dt={dt}, substeps={substeps})"
        )

    states = np.zeros((n_steps + 1, dim * dim), dtype=complex)
    states[0] = rho0.vectorized()
    for n in range(1, n_steps + 1):
        states[n] = coarse @ states[n - 1]
    if not np.all(np.isfinite(states)):
        raise NumericalError("Lindblad reference produced non-finite values")
    return Trajectory.from_vectors(dt, states, dim, label="lindblad-rk4")
