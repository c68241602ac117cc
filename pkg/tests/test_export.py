import numpy as np
import pandas as pd
import pytest

from src.core import Superoperator, Trajectory
from src.exceptions import InputValidationError
from src.export import (
    compare_tables,
    export_tensor_norms,
    export_trajectory,
    observable_columns,
    read_table,
)
from src.ttm import MemoryKernel, TransferTensors


@pytest.fixture
def trajectory():
    data = np.zeros((3, 2, 2), dtype=complex)
    data[:, 0, 0] = [1.0, 0.75, 0.6]
    data[:, 1, 1] = [0.0, 0.25, 0.4]
    data[:, 0, 1] = [0.0, 0.1 + 0.2j, 1.0 / 3.0]
    data[:, 1, 0] = np.conj(data[:, 0, 1])
    return Trajectory(dt=2.0, data=data, label="test")


def test_population_columns(trajectory):
    df = observable_columns(trajectory, ["populations"], ["1", "g"])
    assert list(df.columns) == ["time_fs", "P_1", "P_g"]
    assert df["time_fs"].tolist() == [0.0, 2.0, 4.0]
    assert df["P_g"].tolist() == [0.0, 0.25, 0.4]


def test_coherence_and_density_matrix_columns(trajectory):
    df = observable_columns(trajectory, ["coherence:1-g"], ["1", "g"])
    assert list(df.columns) == ["time_fs", "Re_rho_1_g", "Im_rho_1_g"]
    assert df["Im_rho_1_g"][1] == pytest.approx(0.2)
    full = observable_columns(trajectory, ["density_matrix"], ["0", "1"])
    assert len(full.columns) == 1 + 8


@pytest.mark.parametrize(
    "observables, labels, message",
    [
        (["coherence:1-7"], ["1", "g"], "unknown basis label"),
        (["energy"], ["1", "g"], "Unknown observable"),
        ([], ["1", "g"], "No observables"),
        (["populations"], ["1"], "labels"),
    ],
)
def test_observable_validation(trajectory, observables, labels, message):
    with pytest.raises(InputValidationError, match=message):
        observable_columns(trajectory, observables, labels)


def test_exported_table_keeps_full_precision(tmp_path, trajectory):
    path = str(tmp_path / "out" / "traj.tsv")
    export_trajectory(trajectory, ["coherence:0-1"], path, ["0", "1"], header={"jump_set": "none"})
    text = open(path, encoding="utf-8").read()
    assert "# jump_set: none" in text
    assert "# label: test" in text
    df = read_table(path)
    assert df["Re_rho_0_1"][2] == 1.0 / 3.0


def test_compare_identical_and_different_tables(tmp_path, trajectory):
    a, b, c = (str(tmp_path / name) for name in ("a.tsv", "b.tsv", "c.tsv"))
    export_trajectory(trajectory, ["populations"], a, ["0", "1"])
    export_trajectory(trajectory, ["populations"], b, ["0", "1"], header={"note": "same data"})
    shifted = Trajectory(dt=2.0, data=trajectory.data + np.diag([1e-6, 0.0]))
    export_trajectory(shifted, ["populations"], c, ["0", "1"])

    same, problems = compare_tables(a, b)
    assert same and problems == []
    same, problems = compare_tables(a, c)
    assert not same
    assert len(problems) == 1 and problems[0].startswith("P_0")
    assert compare_tables(a, c, atol=1e-5)[0]


def test_compare_reports_structural_mismatch(tmp_path, trajectory):
    a, b = str(tmp_path / "a.tsv"), str(tmp_path / "b.tsv")
    export_trajectory(trajectory, ["populations"], a, ["0", "1"])
    export_trajectory(trajectory, ["density_matrix"], b, ["0", "1"])
    same, problems = compare_tables(a, b)
    assert not same and "columns differ" in problems[0]


def test_read_table_rejects_missing_file(tmp_path):
    with pytest.raises(InputValidationError, match="Cannot read"):
        read_table(str(tmp_path / "missing.tsv"))


def test_tensor_norm_table(tmp_path):
    tt = TransferTensors(dt=3.0, tensors=(Superoperator.identity(2), Superoperator.zeros(2)))
    kernel = MemoryKernel(dt=3.0, kernels=(Superoperator.zeros(2), Superoperator.identity(2)))
    path = export_tensor_norms(tt, kernel, str(tmp_path / "norms.tsv"))
    df = pd.read_csv(path, sep="\t")
    assert df["time_fs"].tolist() == [3.0, 6.0]
    assert df["T_norm"].tolist() == [2.0, 0.0]
    assert df["K_norm"].tolist() == [0.0, 2.0]
