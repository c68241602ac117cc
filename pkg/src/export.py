"""Tab-separated result tables for trajectories and transfer-tensor norms."""

import logging
import os
import re
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.core import Trajectory
from src.exceptions import InputValidationError
from src.ttm import MemoryKernel, TransferTensors

log = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
SEPARATOR = "\t"


def _coherence_pair(name: str, labels: Sequence[str]) -> Tuple[int, int]:
    match = re.fullmatch(r"coherence:([^-\s]+)-([^-\s]+)", name)
    if not match:
        raise InputValidationError(f"Unknown observable '{name}'")
    a, b = match.groups()
    if a not in labels or b not in labels:
        raise InputValidationError(f"Observable '{name}' refers to unknown basis label(s); labels are {list(labels)}")
    return labels.index(a), labels.index(b)


def observable_columns(trajectory: Trajectory, observables: Sequence[str], labels: Sequence[str]) -> pd.DataFrame:
    """Builds the result table for the requested observables.

    Args:
        trajectory (Trajectory): Propagated states.
        observables (Sequence[str]): "populations", "density_matrix" or "coherence:<a>-<b>".
        labels (Sequence[str]): Basis labels of the model.

    Returns:
        pd.DataFrame: ``time_fs`` followed by one column per requested quantity.
    """
    labels = list(labels)
    if len(labels) != trajectory.dim:
        raise InputValidationError(f"Got {len(labels)} labels for a d={trajectory.dim} trajectory")
    if not observables:
        raise InputValidationError("No observables requested")
    columns: Dict[str, np.ndarray] = {"time_fs": trajectory.times}
    data = trajectory.data

    def add_element(i: int, j: int) -> None:
        columns[f"Re_rho_{labels[i]}_{labels[j]}"] = np.real(data[:, i, j])
        columns[f"Im_rho_{labels[i]}_{labels[j]}"] = np.imag(data[:, i, j])

    for name in observables:
        if name == "populations":
            populations = trajectory.populations()
            for i, label in enumerate(labels):
                columns[f"P_{label}"] = populations[:, i]
        elif name == "density_matrix":
            for i in range(trajectory.dim):
                for j in range(trajectory.dim):
                    add_element(i, j)
        else:
            add_element(*_coherence_pair(name, labels))
    return pd.DataFrame(columns)


def export_trajectory(
    trajectory: Trajectory,
    observables: Sequence[str],
    path: str,
    labels: Sequence[str],
    header: Optional[Dict[str, object]] = None,
) -> str:
    """Writes a trajectory table with a '#' comment header; returns the path."""
    df = observable_columns(trajectory, observables, labels)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    meta = {"label": trajectory.label, "dt_fs": trajectory.dt, "trace_drift": f"{trajectory.trace_drift():.3e}"}
    meta.update(header or {})
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for key, value in meta.items():
            fh.write(f"# {key}: {value}\n")
        df.to_csv(fh, sep=SEPARATOR, index=False, float_format=FLOAT_FORMAT)
    log.info(f"Wrote {len(df)} rows to {path}")
    return path


def tensor_norm_table(tt: TransferTensors, kernel: Optional[MemoryKernel] = None) -> pd.DataFrame:
    k = np.arange(1, tt.mem_len + 1)
    table = {"k": k, "time_fs": k * tt.dt, "T_norm": tt.norms()}
    if kernel is not None:
        table["K_norm"] = kernel.norms()
    return pd.DataFrame(table)


def export_tensor_norms(tt: TransferTensors, kernel: Optional[MemoryKernel], path: str) -> str:
    df = tensor_norm_table(tt, kernel)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    df.to_csv(path, sep=SEPARATOR, index=False, float_format=FLOAT_FORMAT)
    log.info(f"Wrote transfer-tensor norms to {path}")
    return path


def read_table(path: str) -> pd.DataFrame:
    try:
        return pd.read_csv(path, sep=SEPARATOR, comment="#")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise InputValidationError(f"Cannot read result table '{path}': {e}") from e


def compare_tables(path_a: str, path_b: str, rtol: float = 1e-8, atol: float = 1e-10) -> Tuple[bool, List[str]]:
    """Compares two trajectory tables column by column.

    Returns:
        Tuple[bool, List[str]]: Whether the tables agree and one message per
        differing column (or structural mismatch).
    """
    df_a = read_table(path_a)
    df_b = read_table(path_b)
    problems: List[str] = []
    if list(df_a.columns) != list(df_b.columns):
        problems.append(f"columns differ: {list(df_a.columns)} vs {list(df_b.columns)}")
        return False, problems
    if len(df_a) != len(df_b):
        problems.append(f"row counts differ: {len(df_a)} vs {len(df_b)}")
        return False, problems
    for column in df_a.columns:
        a = df_a[column].to_numpy(dtype=float)
        b = df_b[column].to_numpy(dtype=float)
        if not np.allclose(a, b, rtol=rtol, atol=atol):
            worst = int(np.argmax(np.abs(a - b)))
            problems.append(
                f"{column}: max |diff| {np.max(np.abs(a - b)):.3e} at row {worst} ({a[worst]!r} vs {b[worst]!r})"
            )
    return not problems, problems
