import json
import logging
import os

import numpy as np
import pytest

from src import pipeline
from src.core import DensityMatrix, Superoperator
from src.exceptions import InputValidationError
from src.models import spin_boson
from src.pipeline import RunOptions, maps_key, propagate_jump_sets, run_pipeline, trajectory_filename
from src.run_config import build_model, load_config, parse_config
from src.ttm import MemoryKernel, ttm_propagate

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")


def small_run(out_dir, **numerics):
    data = {
        "model": {
            "kind": "spin_boson",
            "energy_unit": "fs-1",
            "eps": 0.0,
            "delta": 0.05,
            "baths": [{"kind": "ohmic_exponential", "xi": 0.1, "omega_c": 0.25}],
            "beta_fs": 20.0,
            "initial_states": ["0", "1"],
        },
        "numerics": dict({"dt": 2.0, "n_map_steps": 4, "mem_len": 2, "propagate_to": 40.0}, **numerics),
        "jump_sets": [
            {"label": "none", "operators": []},
            {"label": "weak", "operators": [{"matrix": [[0.0, 0.0], [0.0, 0.01]]}]},
            {"label": "strong", "operators": [{"matrix": [[0.0, 0.0], [0.0, 0.05]]}]},
            {"label": "decay", "operators": [{"matrix": [[0.0, 0.05], [0.0, 0.0]]}]},
        ],
        "outputs": {"directory": str(out_dir), "observables": ["populations", "coherence:0-1"]},
    }
    return parse_config(data)


@pytest.fixture
def options(tmp_path):
    return RunOptions(cache_dir=str(tmp_path / "cache"))


def test_full_run_writes_tables_and_summary(tmp_path, options):
    out_dir = tmp_path / "results"
    result = run_pipeline(small_run(out_dir), options)
    assert [s.name for s in result.stages] == ["maps", "ttm"]
    assert len(result.trajectories) == 8
    assert (out_dir / "tensor_norms.tsv").exists()
    assert (out_dir / trajectory_filename("1", "decay")).exists()
    summary = json.loads((out_dir / "run_summary.json").read_text())
    assert [s["source"] for s in summary["stages"]] == ["computed", "computed"]
    assert len(summary["trace_drift"]) == 8
    assert all(drift < 1e-8 for drift in summary["trace_drift"].values())


def test_jump_sets_share_one_map_generation(tmp_path, options, mocker):
    spy = mocker.spy(pipeline, "dynamical_maps")
    run_pipeline(small_run(tmp_path / "results"), options)
    assert spy.call_count == 1


def test_second_run_loads_every_stage_from_cache(tmp_path, options, mocker, caplog):
    config = small_run(tmp_path / "results")
    first = run_pipeline(config, options)
    spy = mocker.spy(pipeline, "dynamical_maps")
    with caplog.at_level(logging.INFO):
        second = run_pipeline(config, options)
    assert spy.call_count == 0
    assert [s.source for s in second.stages] == ["loaded", "loaded"]
    assert "Stage 'maps': loaded from cache" in caplog.text
    assert np.array_equal(first.kernel.as_array(), second.kernel.as_array())
    for key, trajectory in first.trajectories.items():
        assert np.array_equal(trajectory.data, second.trajectories[key].data)


def test_changing_jump_sets_keeps_the_maps_key(tmp_path):
    config = small_run(tmp_path)
    model = build_model(config.model)
    trimmed = config.model_copy(update={"jump_sets": config.jump_sets[:1]})
    assert maps_key(config, model) == maps_key(trimmed, model)
    longer = small_run(tmp_path, mem_len=3)
    assert maps_key(config, model) != maps_key(longer, model)


def test_force_recompute_is_bit_identical(tmp_path, options, mocker):
    config = small_run(tmp_path / "results")
    first = run_pipeline(config, options, write_outputs=False)
    options.force_recompute = True
    spy = mocker.spy(pipeline, "dynamical_maps")
    second = run_pipeline(config, options, write_outputs=False)
    assert spy.call_count == 1
    for a, b in zip(first.maps, second.maps):
        assert np.array_equal(a.data, b.data)


def test_corrupt_cache_entry_is_recomputed(tmp_path, options, caplog):
    config = small_run(tmp_path / "results")
    first = run_pipeline(config, options, stop_after="maps")
    with open(first.stages[0].path, "wb") as fh:
        fh.write(b"garbage")
    with caplog.at_level(logging.WARNING):
        again = run_pipeline(config, options, stop_after="maps")
    assert "corrupt" in caplog.text
    assert again.stages[0].source == "computed"


def test_stop_after_maps_and_ttm(tmp_path, options):
    out_dir = tmp_path / "results"
    config = small_run(out_dir)
    maps_only = run_pipeline(config, options, stop_after="maps")
    assert maps_only.tensors is None and not maps_only.output_files
    ttm_only = run_pipeline(config, options, stop_after="ttm")
    assert ttm_only.kernel is not None
    assert ttm_only.output_files == [str(out_dir / "tensor_norms.tsv")]
    assert not ttm_only.trajectories


def test_selected_jump_sets(tmp_path, options):
    config = small_run(tmp_path / "results")
    result = run_pipeline(config, options, jump_set_labels=["decay"], write_outputs=False)
    assert set(result.trajectories) == {("0", "decay"), ("1", "decay")}
    with pytest.raises(InputValidationError, match="Unknown jump set"):
        run_pipeline(config, options, jump_set_labels=["missing"], write_outputs=False)


@pytest.mark.parametrize("mode", ["interaction", "short_time"])
def test_empty_jump_set_follows_transfer_tensors_in_both_kernel_modes(tmp_path, options, mode):
    config = small_run(tmp_path / "results", kernel_mode=mode)
    result = run_pipeline(config, options, jump_set_labels=["none"], write_outputs=False)
    assert result.kernel.mode == mode
    for (state, _), trajectory in result.trajectories.items():
        rho0 = DensityMatrix.basis_state(2, result.model.index_of(state))
        direct = ttm_propagate(result.tensors, rho0, trajectory.n_steps)
        assert np.max(np.abs(trajectory.data - direct.data)) <= 1e-12


def test_progress_is_reported(tmp_path):
    calls = []
    options = RunOptions(cache_dir=str(tmp_path / "cache"), progress_callback=lambda p, t: calls.append(p))
    run_pipeline(small_run(tmp_path / "results"), options, write_outputs=False)
    assert calls[0] == 0 and calls[-1] == 100
    assert calls == sorted(calls)


def test_trace_drift_is_reported(drude_bath, caplog):
    model = spin_boson(0.0, 0.05, drude_bath)
    kernel = MemoryKernel(dt=1.0, kernels=(Superoperator.identity(2),))
    with caplog.at_level(logging.WARNING):
        propagate_jump_sets(model, kernel, {"bad": ()}, ["0"], 3)
    assert "trace drift" in caplog.text


def test_trajectory_filename_is_filesystem_safe():
    assert trajectory_filename("1", "decay 2.5ps/site 3") == "traj_1_decay-2.5ps-site-3.tsv"


# --- Frenkel dimer with the ground state ---
@pytest.fixture(scope="module")
def frenkel_demo(tmp_path_factory):
    config = load_config(os.path.join(CONFIG_DIR, "frenkel_demo.yaml"))
    options = RunOptions(cache_dir=str(tmp_path_factory.mktemp("cache")))
    return run_pipeline(config, options, write_outputs=False)


@pytest.mark.slow
def test_demo_without_decay_conserves_excitons(frenkel_demo):
    g = frenkel_demo.model.index_of("g")
    for state in ("1", "2"):
        populations = frenkel_demo.trajectories[(state, "no-decay")].populations()
        assert np.max(np.abs(populations[:, g])) <= 1e-12


@pytest.mark.slow
def test_demo_decay_sweep_is_ordered(frenkel_demo):
    g = frenkel_demo.model.index_of("g")
    labels = ["decay-200ps", "decay-10ps", "decay-5ps", "decay-2.5ps"]
    ground = np.array([frenkel_demo.trajectories[("1", label)].populations()[2:, g] for label in labels])
    assert np.all(np.diff(ground, axis=0) > 0)


@pytest.mark.slow
def test_demo_slow_decay_stays_close_to_no_decay(frenkel_demo):
    slow = frenkel_demo.trajectories[("1", "decay-200ps")]
    plain = frenkel_demo.trajectories[("1", "no-decay")]
    horizon = slow.times[-1]
    bound = 1.0 - np.exp(-horizon / 200000.0) + 0.01
    assert np.max(np.abs(slow.populations() - plain.populations())) <= bound


@pytest.mark.slow
def test_demo_runs_one_map_generation_for_five_jump_sets(tmp_path, mocker):
    config = load_config(os.path.join(CONFIG_DIR, "frenkel_demo.yaml"))
    spy = mocker.spy(pipeline, "dynamical_maps")
    result = run_pipeline(config, RunOptions(cache_dir=str(tmp_path)), write_outputs=False)
    assert spy.call_count == 1
    assert len({label for _, label in result.trajectories}) == 5


@pytest.mark.slow
def test_demo_extraction_suppresses_the_rise_on_the_extraction_site(frenkel_demo):
    site_2 = frenkel_demo.model.index_of("2")
    plain = frenkel_demo.trajectories[("1", "no-decay")].populations()[:, site_2]
    fast = frenkel_demo.trajectories[("1", "decay-2.5ps")].populations()[:, site_2]
    assert fast.max() < plain.max()
    late = slice(len(plain) // 2, None)
    assert fast[late].mean() < 0.8 * plain[late].mean()
    assert fast[-1] < 0.7 * plain[-1]
