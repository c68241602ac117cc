"""Transfer tensors, memory kernels and transfer-tensor propagation."""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.core import (
    DensityMatrix,
    Superoperator,
    Trajectory,
    commutator_superoperator,
    stack_superoperators,
    vec,
)
from src.exceptions import InputValidationError

log = logging.getLogger(__name__)

MEMORY_DECAY_THRESHOLD = 1e-3

KERNEL_MODES = ("interaction", "short_time")


@dataclass(frozen=True, eq=False)
class TransferTensors:
    """T_1 .. T_L on a grid of step ``dt``."""

    dt: float
    tensors: Tuple[Superoperator, ...]

    def __post_init__(self):
        if not self.tensors:
            raise InputValidationError("TransferTensors needs at least one tensor")
        object.__setattr__(self, "tensors", tuple(self.tensors))

    @property
    def dim(self) -> int:
        return self.tensors[0].dim

    @property
    def mem_len(self) -> int:
        return len(self.tensors)

    def as_array(self) -> np.ndarray:
        return stack_superoperators(self.tensors)

    def norms(self) -> np.ndarray:
        return np.array([t.frobenius_norm() for t in self.tensors])


@dataclass(frozen=True, eq=False)
class MemoryKernel:
    """K_1 .. K_L in fs^-2, with the mode they were derived in."""

    dt: float
    kernels: Tuple[Superoperator, ...]
    mode: str = "interaction"

    def __post_init__(self):
        if not self.kernels:
            raise InputValidationError("MemoryKernel needs at least one kernel")
        if self.mode not in KERNEL_MODES:
            raise InputValidationError(f"Unknown kernel mode '{self.mode}', expected one of {KERNEL_MODES}")
        object.__setattr__(self, "kernels", tuple(self.kernels))

    @property
    def dim(self) -> int:
        return self.kernels[0].dim

    @property
    def mem_len(self) -> int:
        return len(self.kernels)

    def as_array(self) -> np.ndarray:
        return stack_superoperators(self.kernels)

    def norms(self) -> np.ndarray:
        return np.array([k.frobenius_norm() for k in self.kernels])


def extract_transfer_tensors(
    maps: Sequence[Superoperator],
    L: Optional[int] = None,
    dt: float = 1.0,
    tau_mem: Optional[float] = None,
) -> TransferTensors:
    """Extracts transfer tensors from dynamical maps E(t_1), E(t_2), ...

    ``T_1 = E_1`` and ``T_n = E_n - sum_{k<n} T_k E_{n-k}``.

    Args:
        maps: Dynamical maps starting at t_1 = dt.
        L: Number of tensors to extract; defaults to all maps.
        dt: Time step of the maps in fs.
        tau_mem: Optional memory time in fs; tensors with ``k * dt > tau_mem`` are dropped.

    Returns:
        TransferTensors: The extracted tensors.
    """
    maps = list(maps)
    if L is None:
        L = len(maps)
    if L < 1:
        raise InputValidationError(f"L must be >= 1, got {L}")
    if len(maps) < L:
        raise InputValidationError(f"Need at least {L} dynamical maps, got {len(maps)}")
    if tau_mem is not None:
        if not tau_mem > 0:
            raise InputValidationError(f"tau_mem must be positive, got {tau_mem}")
        L = max(1, min(L, int(np.floor(tau_mem / dt + 1e-9))))
    stacked = stack_superoperators(maps[:L])

    tensors: List[np.ndarray] = []
    for n in range(L):
        current = stacked[n].copy()
        for k in range(n):
            current -= tensors[k] @ stacked[n - 1 - k]
        tensors.append(current)

    result = TransferTensors(dt=dt, tensors=tuple(Superoperator(t) for t in tensors))
    norms = result.norms()
    if L >= 2 and norms[-1] > MEMORY_DECAY_THRESHOLD * norms[0]:
        log.warning(
            f"Transfer tensors: memory not converged (||T_{L}|| = {norms[-1]:.3e} > "
            f"{MEMORY_DECAY_THRESHOLD:g} * ||T_1|| = {MEMORY_DECAY_THRESHOLD * norms[0]:.3e})"
        )
    log.info(f"Extracted {L} transfer tensors (dt={dt} fs)")
    return result


def reconstruct_maps(tt: TransferTensors, n_steps: int) -> List[Superoperator]:
    """Rebuilds E(t_1) .. E(t_n) from transfer tensors, with E(t_0) = I."""
    d2 = tt.dim**2
    tensors = tt.as_array()
    maps = [np.eye(d2, dtype=complex)]
    for n in range(1, n_steps + 1):
        total = np.zeros((d2, d2), dtype=complex)
        for k in range(1, min(n, tt.mem_len) + 1):
            total += tensors[k - 1] @ maps[n - k]
        maps.append(total)
    return [Superoperator(m) for m in maps[1:]]


def reconstruction_error(tt: TransferTensors, maps: Sequence[Superoperator]) -> float:
    """Max-norm deviation between ``maps`` and their transfer-tensor reconstruction."""
    rebuilt = reconstruct_maps(tt, len(maps))
    return max(float(np.max(np.abs(a.data - b.data))) for a, b in zip(rebuilt, maps))


def kernel_base_step(
    mode: str,
    E0dt: Superoperator,
    dt: float,
    H0: Optional[np.ndarray] = None,
) -> Superoperator:
    """One-step map a kernel of the given mode is measured against.

    ``interaction`` uses the bare map ``E0(dt)``; ``short_time`` uses the
    first-order step ``I - i L0 dt`` built from ``H0``. A kernel must be
    propagated with the base step of its own mode.
    """
    if mode == "interaction":
        return E0dt
    if mode == "short_time":
        if H0 is None:
            raise InputValidationError("short_time kernel mode needs H0")
        liouvillian = commutator_superoperator(H0)
        if liouvillian.dim != E0dt.dim:
            raise InputValidationError(f"Dimension mismatch: E0 d={E0dt.dim}, H0 d={liouvillian.dim}")
        return Superoperator(np.eye(E0dt.dim**2, dtype=complex) - 1j * dt * liouvillian.data)
    raise InputValidationError(f"Unknown kernel mode '{mode}', expected one of {KERNEL_MODES}")


def memory_kernel(
    tt: TransferTensors,
    E0dt: Superoperator,
    mode: str = "interaction",
    H0: Optional[np.ndarray] = None,
) -> MemoryKernel:
    """Memory kernel from transfer tensors.

    ``interaction``: ``K_k = (T_k - delta_k1 E0(dt)) / dt^2``.
    ``short_time``: ``K_k = (T_k - delta_k1 (I - i L0 dt)) / dt^2`` where L0 is
    the commutator with ``H0``, which must then be given.
    """
    if E0dt.dim != tt.dim:
        raise InputValidationError(f"Dimension mismatch: tensors d={tt.dim}, E0 d={E0dt.dim}")
    dt = tt.dt
    reference = kernel_base_step(mode, E0dt, dt, H0).data

    kernels = []
    for k, tensor in enumerate(tt.tensors, start=1):
        data = tensor.data - reference if k == 1 else tensor.data
        kernels.append(Superoperator(data / dt**2))
    return MemoryKernel(dt=dt, kernels=tuple(kernels), mode=mode)


def _initial_vector(rho0: DensityMatrix, dim: int) -> np.ndarray:
    if rho0.dim != dim:
        raise InputValidationError(f"Dimension mismatch: state d={rho0.dim}, propagator d={dim}")
    return vec(rho0.data)


def ttm_propagate(tt: TransferTensors, rho0: DensityMatrix, n_steps: int, label: str = "ttm") -> Trajectory:
    """Propagates ``rho(t_n) = sum_{k=1}^{min(n, L)} T_k rho(t_{n-k})``."""
    if n_steps < 1:
        raise InputValidationError(f"n_steps must be >= 1, got {n_steps}")
    tensors = tt.as_array()
    states = np.zeros((n_steps + 1, tt.dim**2), dtype=complex)
    states[0] = _initial_vector(rho0, tt.dim)
    for n in range(1, n_steps + 1):
        acc = np.zeros(tt.dim**2, dtype=complex)
        for k in range(1, min(n, tt.mem_len) + 1):
            acc += tensors[k - 1] @ states[n - k]
        states[n] = acc
    return Trajectory.from_vectors(tt.dt, states, tt.dim, label=label)
