"""Iterative QuAPI path sum producing the dynamical maps E(t_1) .. E(t_n).

A forward/backward pair ``(s+, s-)`` is addressed by its column-major index
``a = s- * d + s+``, the same index the pair has in ``vec(rho)``.  The
initial index ``a_0`` is never contracted, so every step yields a full
superoperator column block.
"""

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import reduce
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from src.bath import BathSpec, EtaCoefficients, QuadratureSettings, eta_coefficients
from src.core import Superoperator, bare_map
from src.exceptions import InputValidationError, PathBudgetExceededError
from src.models import SystemModel
from src.settings import DEFAULT_PATH_BUDGET

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PathSegment:
    """Forward and backward system basis indices at one time point."""

    fwd: int
    bwd: int

    def pair_index(self, dim: int) -> int:
        return self.bwd * dim + self.fwd

    @classmethod
    def from_pair_index(cls, index: int, dim: int) -> "PathSegment":
        return cls(fwd=index % dim, bwd=index // dim)


def path_states(dim: int, mem_len: int) -> int:
    return (dim * dim) ** (mem_len + 1)


def check_path_budget(dim: int, mem_len: int, budget: Optional[int] = None) -> int:
    """Raises PathBudgetExceededError if ``(d^2)^(L+1)`` exceeds ``budget``."""
    budget = DEFAULT_PATH_BUDGET if budget is None else budget
    states = path_states(dim, mem_len)
    if states > budget:
        raise PathBudgetExceededError(dim=dim, mem_len=mem_len, path_states=states, budget=budget)
    return states


def influence_weight(
    path: Sequence[PathSegment],
    etas: Sequence[EtaCoefficients],
    baths: Sequence[BathSpec],
    mem_len: Optional[int] = None,
) -> complex:
    """Influence functional of one forward/backward path.

    Evaluates the double sum over time points directly; pairs further apart
    than ``mem_len`` steps are dropped when ``mem_len`` is given.
    """
    if len(path) < 1:
        raise InputValidationError("Path must contain at least one time point")
    if len(etas) != len(baths):
        raise InputValidationError(f"Need one eta table per bath: {len(etas)} tables, {len(baths)} baths")
    total = 0j
    n = len(path) - 1
    for bath, eta in zip(baths, etas):
        coupling = bath.coupling_diag
        try:
            c_fwd = [coupling[seg.fwd] for seg in path]
            c_bwd = [coupling[seg.bwd] for seg in path]
        except IndexError:
            raise InputValidationError(f"Path index out of range for coupling of length {len(coupling)}") from None
        for k in range(n + 1):
            diff = c_fwd[k] - c_bwd[k]
            if diff == 0:
                continue
            for kp in range(k + 1):
                lag = k - kp
                if mem_len is not None and lag > mem_len:
                    continue
                value = eta.lag(lag)
                total += diff * (value * c_fwd[kp] - np.conj(value) * c_bwd[kp])
    return complex(np.exp(-total))


def influence_tables(
    baths: Sequence[BathSpec],
    etas: Sequence[EtaCoefficients],
    dim: int,
    max_lag: int,
) -> Tuple[np.ndarray, np.ndarray]:
    """Per-point and pairwise influence factors on pair indices.

    Returns:
        Tuple[np.ndarray, np.ndarray]: ``i0[b]`` for a single point and
        ``ilag[lag, b, a]`` for a later point ``b`` and an earlier point
        ``a`` that are ``lag`` steps apart (``ilag[0]`` is unused).
    """
    d2 = dim * dim
    exponent0 = np.zeros(d2, dtype=complex)
    exponent = np.zeros((max_lag + 1, d2, d2), dtype=complex)
    indices = np.arange(d2)
    for bath, eta in zip(baths, etas):
        coupling = np.asarray(bath.coupling_diag, dtype=float)
        c_fwd = coupling[indices % dim]
        c_bwd = coupling[indices // dim]
        diff = c_fwd - c_bwd
        table = eta.as_array()
        exponent0 += diff * (table[0] * c_fwd - np.conj(table[0]) * c_bwd)
        for lag in range(1, max_lag + 1):
            exponent[lag] += np.outer(diff, table[lag] * c_fwd - np.conj(table[lag]) * c_bwd)
    return np.exp(-exponent0), np.exp(-exponent)


def _outer(vectors: Sequence[np.ndarray]):
    if not vectors:
        return 1.0
    return reduce(np.multiply.outer, vectors)


def _propagate_initial_index(
    a0: int,
    n_max: int,
    mem_len: int,
    e0: np.ndarray,
    i0: np.ndarray,
    ilag: np.ndarray,
) -> np.ndarray:
    """Columns ``E(t_n)[:, a0]`` for n = 1 .. n_max.

    The window tensor carries one axis per retained time point (oldest
    first); at most ``mem_len`` points are kept.
    """
    d2 = e0.shape[0]
    columns = np.zeros((n_max, d2), dtype=complex)
    window = np.asarray(i0[a0], dtype=complex)
    for m in range(n_max):
        new_point = m + 1
        width = window.ndim
        final = new_point == n_max
        drop_oldest = width == mem_len
        if not final:
            out_shape = (window.shape[1:] if drop_oldest else window.shape) + (d2,)
            new_window = np.empty(out_shape, dtype=complex)
        for b in range(d2):
            # axis j of the window is (width - j) steps before the new point
            vectors = [ilag[width - j, b, :] for j in range(width)]
            scalar = i0[b]
            if new_point <= mem_len:
                scalar = scalar * ilag[new_point, b, a0]
            if width:
                vectors[-1] = vectors[-1] * e0[b, :]
            else:
                scalar = scalar * e0[b, a0]
            if final:
                contracted = window
                for vector in vectors:
                    contracted = np.tensordot(vector, contracted, axes=(0, 0))
                columns[m, b] = scalar * contracted
                continue
            if drop_oldest:
                contracted = np.tensordot(vectors[0], window, axes=(0, 0))
                reduced = (scalar * contracted) * _outer(vectors[1:])
            else:
                reduced = (scalar * window) * _outer(vectors)
            new_window[..., b] = reduced
            columns[m, b] = reduced.sum()
        if not final:
            window = new_window
    return columns


def dynamical_maps(
    model: SystemModel,
    dt: float,
    n_max: int,
    mem_len: int,
    quadrature: Optional[QuadratureSettings] = None,
    budget: Optional[int] = None,
    workers: int = 1,
    progress_callback: Optional[Callable[[int, str], None]] = None,
) -> List[Superoperator]:
    """Dynamical maps E(t_1) .. E(t_n_max) with influence memory of ``mem_len`` steps.

    For ``n <= mem_len`` every influence pair is kept, so the maps equal the
    full path sum; beyond that, pairs more than ``mem_len`` steps apart are
    dropped.

    Args:
        model: System Hamiltonian and baths.
        dt: Time step in fs.
        n_max: Number of maps to produce (>= mem_len).
        mem_len: Memory length L in steps.
        quadrature: eta quadrature settings.
        budget: Maximum ``(d^2)^(L+1)``; defaults to 2^28.
        workers: Threads working on independent initial indices.
        progress_callback: Called with (percent, message) after each block.

    Returns:
        List[Superoperator]: The maps, E(t_1) first.

    Raises:
        PathBudgetExceededError: If the dense path sum is over budget.
    """
    if not dt > 0:
        raise InputValidationError(f"Time step must be positive, got {dt}")
    if mem_len < 1:
        raise InputValidationError(f"mem_len must be >= 1, got {mem_len}")
    if n_max < mem_len:
        raise InputValidationError(f"n_max ({n_max}) must be >= mem_len ({mem_len})")
    dim = model.dim
    states = check_path_budget(dim, mem_len, budget)
    log.info(
        f"Computing {n_max} dynamical maps: d={dim}, L={mem_len}, dt={dt} fs, "
        f"{len(model.baths)} bath(s), {states} path states"
    )

    etas = [eta_coefficients(bath, dt, mem_len, quadrature) for bath in model.baths]
    i0, ilag = influence_tables(model.baths, etas, dim, mem_len)
    e0 = bare_map(model.H0, dt).data
    d2 = dim * dim

    results: List[Optional[np.ndarray]] = [None] * d2
    workers = max(1, int(workers))
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = [
            executor.submit(_propagate_initial_index, a0, n_max, mem_len, e0, i0, ilag) for a0 in range(d2)
        ]
        for a0, future in enumerate(futures):
            results[a0] = future.result()
            if progress_callback:
                progress_callback(int(100 * (a0 + 1) / d2), f"Path sum: initial index {a0 + 1}/{d2}")
            log.debug(f"Initial pair index {a0 + 1}/{d2} done")

    stacked = np.stack(results, axis=-1)  # (n_max, d2 rows, d2 columns)
    maps = [Superoperator(stacked[n]) for n in range(n_max)]
    worst = max(m.trace_error() for m in maps)
    log.info(f"Dynamical maps done; worst trace error {worst:.2e}")
    return maps


def full_path_map(
    model: SystemModel,
    dt: float,
    n: int,
    mem_len: Optional[int] = None,
    quadrature: Optional[QuadratureSettings] = None,
    etas: Optional[Sequence[EtaCoefficients]] = None,
) -> Superoperator:
    """E(t_n) by explicit enumeration of every path; only for tiny n and d."""
    if n < 1:
        raise InputValidationError(f"n must be >= 1, got {n}")
    dim = model.dim
    d2 = dim * dim
    if etas is None:
        lags = n if mem_len is None else min(n, mem_len)
        etas = [eta_coefficients(bath, dt, max(1, lags), quadrature) for bath in model.baths]
    e0 = bare_map(model.H0, dt).data
    segments = [PathSegment.from_pair_index(a, dim) for a in range(d2)]
    result = np.zeros((d2, d2), dtype=complex)
    for path in itertools.product(range(d2), repeat=n + 1):
        amplitude = 1.0 + 0j
        for k in range(1, n + 1):
            amplitude *= e0[path[k], path[k - 1]]
            if amplitude == 0:
                break
        if amplitude == 0:
            continue
        weight = influence_weight([segments[a] for a in path], etas, model.baths, mem_len=mem_len)
        result[path[-1], path[0]] += amplitude * weight
    return Superoperator(result)
