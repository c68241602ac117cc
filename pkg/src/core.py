"""Dense linear algebra types shared by the whole pipeline.

Conventions used everywhere in the package:

* hbar = 1, times in fs, energies in fs^-1.
* Density matrices are vectorized column-major: the (r, c) entry of rho sits at
  index ``c * d + r`` of ``vec(rho)``.
* ``Superoperator.from_pair(A, B)`` is the map ``rho -> A @ rho @ B.T``; under the
  column-major convention its matrix is ``kron(B, A)``.
"""

import logging
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence

import numpy as np
import scipy.linalg

from src.exceptions import InputValidationError

log = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
POSITIVITY_TOL = 1e-10
H0_HERMITIAN_TOL = 1e-10

# --- Unit conversions ---
SPEED_OF_LIGHT_CM_PER_FS = 2.99792458e-5
HBAR_EV_FS = 0.6582119569
BOLTZMANN_EV_PER_K = 8.617333262e-5


def wavenumber_to_angular_frequency(nu_cm: float) -> float:
    """Converts an energy in cm^-1 to an angular frequency in fs^-1."""
    return 2.0 * np.pi * SPEED_OF_LIGHT_CM_PER_FS * nu_cm


def beta_from_temperature(temperature_k: float) -> float:
    """Inverse temperature in fs (hbar = 1) for a temperature in kelvin."""
    if temperature_k <= 0:
        raise InputValidationError(f"Temperature must be positive, got {temperature_k} K")
    return HBAR_EV_FS / (BOLTZMANN_EV_PER_K * temperature_k)


# --- Vectorization ---
def vec(matrix: np.ndarray) -> np.ndarray:
    """Stacks the columns of a square matrix into a vector."""
    return np.asarray(matrix).reshape(-1, order="F")


def unvec(vector: np.ndarray, dim: Optional[int] = None) -> np.ndarray:
    """Inverse of :func:`vec`."""
    vector = np.asarray(vector)
    if dim is None:
        dim = int(round(np.sqrt(vector.size)))
    if dim * dim != vector.size:
        raise InputValidationError(f"Vector of length {vector.size} is not a vectorized {dim}x{dim} matrix")
    return vector.reshape((dim, dim), order="F")


def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=complex, copy=True)
    array.setflags(write=False)
    return array


def _check_square(matrix: np.ndarray, name: str) -> np.ndarray:
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] == 0:
        raise InputValidationError(f"{name} must be a non-empty square matrix, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise InputValidationError(f"{name} contains non-finite entries")
    return matrix


# --- Domain types ---
@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite d x d state."""

    data: np.ndarray
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        data = _check_square(self.data, "Density matrix")
        if self.validate:
            herm_err = np.max(np.abs(data - data.conj().T))
            if herm_err > HERMITIAN_TOL:
                raise InputValidationError(f"Density matrix is not Hermitian (max deviation {herm_err:.3e})")
            trace_err = abs(np.trace(data) - 1.0)
            if trace_err > TRACE_TOL:
                raise InputValidationError(f"Density matrix trace deviates from 1 by {trace_err:.3e}")
            min_eig = np.min(np.linalg.eigvalsh(0.5 * (data + data.conj().T)))
            if min_eig < -POSITIVITY_TOL:
                raise InputValidationError(f"Density matrix has negative eigenvalue {min_eig:.3e}")
        object.__setattr__(self, "data", _readonly(data))

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @classmethod
    def basis_state(cls, dim: int, index: int) -> "DensityMatrix":
        """Returns the pure state |index><index|."""
        if not 0 <= index < dim:
            raise InputValidationError(f"Basis index {index} out of range for dimension {dim}")
        data = np.zeros((dim, dim), dtype=complex)
        data[index, index] = 1.0
        return cls(data)

    def vectorized(self) -> np.ndarray:
        return vec(self.data)


@dataclass(frozen=True, eq=False)
class Superoperator:
    """Linear map on column-major vectorized d x d matrices."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        d2 = data.shape[0] if data.ndim == 2 else -1
        dim = int(round(np.sqrt(max(d2, 0))))
        if data.ndim != 2 or data.shape[0] != data.shape[1] or dim * dim != d2 or dim == 0:
            raise InputValidationError(f"Superoperator must be a d^2 x d^2 matrix, got shape {data.shape}")
        object.__setattr__(self, "data", _readonly(data))

    @property
    def dim(self) -> int:
        return int(round(np.sqrt(self.data.shape[0])))

    @classmethod
    def identity(cls, dim: int) -> "Superoperator":
        return cls(np.eye(dim * dim, dtype=complex))

    @classmethod
    def zeros(cls, dim: int) -> "Superoperator":
        return cls(np.zeros((dim * dim, dim * dim), dtype=complex))

    @classmethod
    def from_pair(cls, left: np.ndarray, right: np.ndarray) -> "Superoperator":
        """Superoperator of ``rho -> left @ rho @ right.T``."""
        left = _check_square(left, "Left factor")
        right = _check_square(right, "Right factor")
        if left.shape != right.shape:
            raise InputValidationError(f"Factor shapes differ: {left.shape} vs {right.shape}")
        return cls(np.kron(right, left))

    def __add__(self, other: "Superoperator") -> "Superoperator":
        _check_dims(self, other)
        return Superoperator(self.data + other.data)

    def __sub__(self, other: "Superoperator") -> "Superoperator":
        _check_dims(self, other)
        return Superoperator(self.data - other.data)

    def scaled(self, factor: complex) -> "Superoperator":
        return Superoperator(self.data * factor)

    def trace_error(self) -> float:
        """Max deviation of ``Tr(S rho)`` from ``Tr(rho)`` over basis inputs."""
        trace_row = vec(np.eye(self.dim))
        return float(np.max(np.abs(trace_row @ self.data - trace_row)))

    def frobenius_norm(self) -> float:
        return float(np.linalg.norm(self.data))


def _check_dims(*operands) -> int:
    dims = {op.dim for op in operands}
    if len(dims) != 1:
        raise InputValidationError(f"Dimension mismatch: {sorted(dims)}")
    return dims.pop()


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time series of density matrices on a uniform grid ``t_n = n * dt``.

    ``data`` holds the stacked matrices with shape ``(n_steps + 1, d, d)``.
    """

    dt: float
    data: np.ndarray
    label: str = ""

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or data.shape[1] != data.shape[2]:
            raise InputValidationError(f"Trajectory data must have shape (n, d, d), got {data.shape}")
        object.__setattr__(self, "data", _readonly(data))

    @classmethod
    def from_vectors(cls, dt: float, vectors: np.ndarray, dim: int, label: str = "") -> "Trajectory":
        vectors = np.asarray(vectors)
        # row-major reshape of a column-stacked vector yields [c, r]
        matrices = vectors.reshape((vectors.shape[0], dim, dim)).transpose(0, 2, 1)
        return cls(dt=dt, data=matrices, label=label)

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    @property
    def n_steps(self) -> int:
        return self.data.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.data.shape[0])

    @property
    def states(self) -> List[DensityMatrix]:
        return [DensityMatrix(m, validate=False) for m in self.data]

    def populations(self) -> np.ndarray:
        return np.real(np.einsum("nii->ni", self.data))

    def trace_drift(self) -> float:
        """Maximum ``|Tr rho_n - 1|`` along the trajectory."""
        return float(np.max(np.abs(np.einsum("nii->n", self.data) - 1.0)))


# --- Operations ---
def validate_hamiltonian(h0: np.ndarray, tol: float = H0_HERMITIAN_TOL) -> np.ndarray:
    h0 = _check_square(h0, "H0").astype(complex)
    herm_err = np.max(np.abs(h0 - h0.conj().T))
    if herm_err > tol:
        raise InputValidationError(f"H0 is not Hermitian (max deviation {herm_err:.3e})")
    return h0


def propagator(h0: np.ndarray, dt: float) -> np.ndarray:
    """Unitary ``exp(-i H0 dt)`` from the Hermitian eigendecomposition."""
    h0 = validate_hamiltonian(h0)
    if not dt > 0:
        raise InputValidationError(f"Time step must be positive, got {dt}")
    energies, vectors = scipy.linalg.eigh(0.5 * (h0 + h0.conj().T))
    return (vectors * np.exp(-1j * energies * dt)) @ vectors.conj().T


def bare_map(h0: np.ndarray, dt: float) -> Superoperator:
    """Bare forward-backward propagator ``rho -> U rho U^dagger`` with ``U = exp(-i H0 dt)``."""
    u = propagator(h0, dt)
    return Superoperator.from_pair(u, u.conj())


def commutator_superoperator(h0: np.ndarray) -> Superoperator:
    """Superoperator of ``rho -> [H0, rho]``."""
    h0 = validate_hamiltonian(h0)
    eye = np.eye(h0.shape[0], dtype=complex)
    return Superoperator.from_pair(h0, eye) - Superoperator.from_pair(eye, h0.T)


def apply(superop: Superoperator, rho) -> np.ndarray:
    """Applies a superoperator to a density matrix (no renormalization)."""
    matrix = rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho)
    if matrix.shape != (superop.dim, superop.dim):
        raise InputValidationError(
            f"Dimension mismatch: superoperator acts on d={superop.dim}, state has shape {matrix.shape}"
        )
    return unvec(superop.data @ vec(matrix), superop.dim)


def compose(second: Superoperator, first: Superoperator) -> Superoperator:
    """Returns ``second * first`` (``first`` is applied first)."""
    _check_dims(second, first)
    return Superoperator(second.data @ first.data)


def compose_all(operators: Iterable[Superoperator]) -> Superoperator:
    """Composes operators given in application order."""
    result: Optional[Superoperator] = None
    for op in operators:
        result = op if result is None else compose(op, result)
    if result is None:
        raise InputValidationError("compose_all needs at least one superoperator")
    return result


def stack_superoperators(operators: Sequence[Superoperator]) -> np.ndarray:
    """Stacks superoperators into an array of shape ``(n, d^2, d^2)``."""
    if not operators:
        raise InputValidationError("No superoperators to stack")
    _check_dims(*operators)
    return np.stack([op.data for op in operators])
