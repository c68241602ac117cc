"""Stage orchestration: maps -> transfer tensors/kernel -> propagations -> tables."""

import json
import logging
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src import cache_helpers
from src.core import DensityMatrix, Superoperator, Trajectory, bare_map
from src.exceptions import InputValidationError
from src.export import export_tensor_norms, export_trajectory
from src.lindblad import JumpOperator, hybrid_propagate
from src.models import SystemModel
from src.quapi import dynamical_maps
from src.run_config import RunConfig, build_jump_sets, build_model
from src.settings import DEFAULT_CACHE_DIR
from src.ttm import (
    MemoryKernel,
    TransferTensors,
    extract_transfer_tensors,
    kernel_base_step,
    memory_kernel,
)

log = logging.getLogger(__name__)

TRACE_DRIFT_WARN = 1e-8

ProgressCallback = Callable[[int, str], None]


@dataclass
class StageResult:
    name: str
    key: str
    source: str  # "computed" or "loaded"
    path: Optional[str] = None


@dataclass
class PipelineResult:
    model: SystemModel
    maps: List[Superoperator]
    stages: List[StageResult] = field(default_factory=list)
    tensors: Optional[TransferTensors] = None
    kernel: Optional[MemoryKernel] = None
    trajectories: Dict[Tuple[str, str], Trajectory] = field(default_factory=dict)
    output_files: List[str] = field(default_factory=list)


@dataclass
class RunOptions:
    """Execution options that never influence results."""

    cache_dir: str = DEFAULT_CACHE_DIR
    force_recompute: bool = False
    budget: Optional[int] = None
    workers: int = 1
    base_dir: Optional[str] = None
    progress_callback: Optional[ProgressCallback] = None


def _report(options: RunOptions, percent: int, text: str) -> None:
    if options.progress_callback:
        options.progress_callback(percent, text)


def _stage_log(stage: StageResult) -> None:
    if stage.source == "loaded":
        log.info(f"Stage '{stage.name}': loaded from cache (key={stage.key[:12]})")
    else:
        log.info(f"Stage '{stage.name}': computed (key={stage.key[:12]})")


def maps_key(config: RunConfig, model: SystemModel) -> str:
    num = config.numerics
    return cache_helpers.maps_cache_key(
        model_hash=model.fingerprint(),
        dt=num.dt,
        mem_len=num.mem_len,
        n_map_steps=num.n_map_steps,
        quadrature=num.quadrature.model_dump(),
    )


def ttm_key(config: RunConfig, key_of_maps: str) -> str:
    num = config.numerics
    return cache_helpers.ttm_cache_key(key_of_maps, num.tensor_count, num.tau_mem, num.kernel_mode)


def compute_maps(config: RunConfig, model: SystemModel, options: RunOptions) -> Tuple[List[Superoperator], StageResult]:
    """Dynamical maps for the configured model, from cache when possible."""
    num = config.numerics
    key = maps_key(config, model)
    expected = {"dt": num.dt, "mem_len": num.mem_len, "dim": model.dim, "model_hash": model.fingerprint()}
    if not options.force_recompute:
        entry = cache_helpers.load_entry(options.cache_dir, key, "maps", expected=expected)
        if entry is not None and entry.arrays.get("maps") is not None and len(entry.arrays["maps"]) == num.n_map_steps:
            stage = StageResult("maps", key, "loaded", entry.path)
            _stage_log(stage)
            return [Superoperator(m) for m in entry.arrays["maps"]], stage

    def progress(percent: int, text: str) -> None:
        # maps take the first 60% of a run
        _report(options, int(0.6 * percent), text)

    maps = dynamical_maps(
        model,
        num.dt,
        num.n_map_steps,
        num.mem_len,
        quadrature=num.quadrature.to_settings(),
        budget=options.budget,
        workers=options.workers,
        progress_callback=progress,
    )
    path = cache_helpers.save_entry(
        options.cache_dir,
        key,
        "maps",
        {"maps": np.stack([m.data for m in maps])},
        dict(expected, n_map_steps=num.n_map_steps),
    )
    stage = StageResult("maps", key, "computed", path)
    _stage_log(stage)
    return maps, stage


def compute_transfer_tensors(
    config: RunConfig,
    model: SystemModel,
    maps: Sequence[Superoperator],
    key_of_maps: str,
    options: RunOptions,
) -> Tuple[TransferTensors, MemoryKernel, StageResult]:
    """Transfer tensors and memory kernel, from cache when possible."""
    num = config.numerics
    key = ttm_key(config, key_of_maps)
    expected = {"dt": num.dt, "dim": model.dim, "kernel_mode": num.kernel_mode, "model_hash": model.fingerprint()}
    if not options.force_recompute:
        entry = cache_helpers.load_entry(options.cache_dir, key, "ttm", expected=expected)
        if entry is not None and {"tensors", "kernels"} <= set(entry.arrays):
            tt = TransferTensors(dt=num.dt, tensors=tuple(Superoperator(t) for t in entry.arrays["tensors"]))
            kernel = MemoryKernel(
                dt=num.dt, kernels=tuple(Superoperator(k) for k in entry.arrays["kernels"]), mode=num.kernel_mode
            )
            stage = StageResult("ttm", key, "loaded", entry.path)
            _stage_log(stage)
            return tt, kernel, stage

    tt = extract_transfer_tensors(maps, L=num.tensor_count, dt=num.dt, tau_mem=num.tau_mem)
    e0 = bare_map(model.H0, num.dt)
    kernel = memory_kernel(tt, e0, mode=num.kernel_mode, H0=model.H0)
    path = cache_helpers.save_entry(
        options.cache_dir,
        key,
        "ttm",
        {"tensors": tt.as_array(), "kernels": kernel.as_array()},
        expected,
    )
    stage = StageResult("ttm", key, "computed", path)
    _stage_log(stage)
    return tt, kernel, stage


def propagate_jump_sets(
    model: SystemModel,
    kernel: MemoryKernel,
    jump_sets: Dict[str, Tuple[JumpOperator, ...]],
    initial_states: Sequence[str],
    n_steps: int,
    workers: int = 1,
) -> Dict[Tuple[str, str], Trajectory]:
    """Propagates every (initial state, jump set) pair with the shared kernel."""
    base_step = kernel_base_step(kernel.mode, bare_map(model.H0, kernel.dt), kernel.dt, model.H0)
    jobs = [(state, label) for state in initial_states for label in jump_sets]

    def run_job(job: Tuple[str, str]) -> Trajectory:
        state, label = job
        rho0 = DensityMatrix.basis_state(model.dim, model.index_of(state))
        return hybrid_propagate(kernel, base_step, jump_sets[label], rho0, n_steps, label=f"{label} from |{state}>")

    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        trajectories = list(executor.map(run_job, jobs))

    results = {}
    for job, trajectory in zip(jobs, trajectories):
        drift = trajectory.trace_drift()
        if drift > TRACE_DRIFT_WARN:
            log.warning(f"Trajectory '{trajectory.label}': trace drift {drift:.2e} exceeds {TRACE_DRIFT_WARN:g}")
        results[job] = trajectory
    log.info(f"Propagated {len(jobs)} trajectories for {n_steps} steps each")
    return results


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._]+", "-", text).strip("-") or "set"


def trajectory_filename(initial_state: str, jump_set: str) -> str:
    return f"traj_{_slug(initial_state)}_{_slug(jump_set)}.tsv"


def run_pipeline(
    config: RunConfig,
    options: Optional[RunOptions] = None,
    stop_after: Optional[str] = None,
    jump_set_labels: Optional[Sequence[str]] = None,
    write_outputs: bool = True,
) -> PipelineResult:
    """Runs the configured stages.

    Args:
        config (RunConfig): Validated run configuration.
        options (RunOptions): Cache location, budget and threading.
        stop_after (Optional[str]): "maps" or "ttm" to stop early.
        jump_set_labels (Optional[Sequence[str]]): Subset of jump sets to propagate.
        write_outputs (bool): Whether to write tables and the run summary.

    Returns:
        PipelineResult: Maps, tensors, trajectories and stage provenance.
    """
    options = options or RunOptions()
    _report(options, 0, "Building model...")
    model = build_model(config.model, options.base_dir)
    maps, maps_stage = compute_maps(config, model, options)
    result = PipelineResult(model=model, maps=maps, stages=[maps_stage])
    if stop_after == "maps":
        _report(options, 100, "Maps ready")
        return result

    _report(options, 65, "Extracting transfer tensors...")
    tt, kernel, ttm_stage = compute_transfer_tensors(config, model, maps, maps_stage.key, options)
    result.tensors, result.kernel = tt, kernel
    result.stages.append(ttm_stage)
    out_dir = config.outputs.directory
    if options.base_dir and not os.path.isabs(out_dir):
        out_dir = os.path.join(options.base_dir, out_dir)
    if write_outputs:
        result.output_files.append(export_tensor_norms(tt, kernel, os.path.join(out_dir, "tensor_norms.tsv")))
    if stop_after == "ttm":
        _report(options, 100, "Transfer tensors ready")
        return result

    _report(options, 75, "Propagating...")
    jump_sets = build_jump_sets(config, model.dim)
    if jump_set_labels:
        unknown = [label for label in jump_set_labels if label not in jump_sets]
        if unknown:
            raise InputValidationError(f"Unknown jump set(s) {unknown}; configured: {list(jump_sets)}")
        jump_sets = {label: jump_sets[label] for label in jump_set_labels}
    result.trajectories = propagate_jump_sets(
        model,
        kernel,
        jump_sets,
        config.model.initial_states,
        config.numerics.propagation_steps,
        workers=options.workers,
    )

    if write_outputs:
        _report(options, 90, "Writing result tables...")
        drifts = {}
        for (state, label), trajectory in result.trajectories.items():
            path = os.path.join(out_dir, trajectory_filename(state, label))
            export_trajectory(
                trajectory,
                config.outputs.observables,
                path,
                model.basis_labels,
                header={"initial_state": state, "jump_set": label, "cache_key": maps_stage.key[:16]},
            )
            result.output_files.append(path)
            drifts[f"{state}|{label}"] = trajectory.trace_drift()
        summary_path = os.path.join(out_dir, "run_summary.json")
        with open(summary_path, "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "schema": config.schema_version,
                    "stages": [stage.__dict__ for stage in result.stages],
                    "outputs": result.output_files,
                    "trace_drift": drifts,
                },
                fh,
                indent=2,
            )
        result.output_files.append(summary_path)
    _report(options, 100, "Done")
    return result
