"""Run configuration: pydantic schema, YAML loading and model construction."""

import logging
import os
import re
from typing import Annotated, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import yaml
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PositiveFloat,
    PositiveInt,
    ValidationError,
    field_validator,
    model_validator,
)

from src.bath import (
    BathSpec,
    DrudeLorentz,
    OhmicExponential,
    QuadratureSettings,
    load_tabulated_spectral_density,
)
from src.core import beta_from_temperature, wavenumber_to_angular_frequency
from src.exceptions import InputValidationError
from src.lindblad import JumpOperator
from src.models import GROUND_LABEL, SystemModel, extraction_jump, frenkel_with_ground, spin_boson

log = logging.getLogger(__name__)

SCHEMA_VERSION = "pil-run/1"
OBSERVABLE_PATTERN = re.compile(r"^(populations|density_matrix|coherence:[^-\s]+-[^-\s]+)$")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


# --- Baths ---
class OhmicBathConfig(_Section):
    kind: Literal["ohmic_exponential"]
    xi: float = Field(ge=0)
    omega_c: PositiveFloat


class DrudeBathConfig(_Section):
    kind: Literal["drude_lorentz"]
    reorganization: float = Field(ge=0)
    cutoff: PositiveFloat


class TabulatedBathConfig(_Section):
    kind: Literal["tabulated"]
    path: str


BathConfig = Annotated[
    Union[OhmicBathConfig, DrudeBathConfig, TabulatedBathConfig],
    Field(discriminator="kind"),
]


# --- Model ---
class ModelConfig(_Section):
    kind: Literal["frenkel", "spin_boson"]
    energy_unit: Literal["cm-1", "fs-1"] = "cm-1"
    site_energies: Optional[List[float]] = None
    couplings: Optional[List[List[float]]] = None
    eps: Optional[float] = None
    delta: Optional[float] = None
    baths: List[BathConfig] = Field(min_length=1)
    temperature_k: Optional[PositiveFloat] = None
    beta_fs: Optional[PositiveFloat] = None
    initial_states: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_model(self):
        if (self.temperature_k is None) == (self.beta_fs is None):
            raise ValueError("exactly one of temperature_k and beta_fs must be given")
        if self.kind == "frenkel":
            if not self.site_energies:
                raise ValueError("frenkel model needs site_energies")
            n_sites = len(self.site_energies)
            if self.couplings is None or len(self.couplings) != n_sites or any(len(r) != n_sites for r in self.couplings):
                raise ValueError(f"frenkel model needs a {n_sites}x{n_sites} couplings matrix")
            if len(self.baths) not in (1, n_sites):
                raise ValueError(f"frenkel model needs 1 or {n_sites} baths, got {len(self.baths)}")
        else:
            if self.eps is None or self.delta is None:
                raise ValueError("spin_boson model needs eps and delta")
            if len(self.baths) != 1:
                raise ValueError("spin_boson model takes exactly one bath")
        labels = self.basis_labels()
        if not self.initial_states:
            self.initial_states = [labels[0]]
        unknown = [s for s in self.initial_states if s not in labels]
        if unknown:
            raise ValueError(f"unknown initial state(s) {unknown}; basis labels are {labels}")
        return self

    def basis_labels(self) -> List[str]:
        if self.kind == "frenkel":
            return [str(i) for i in range(1, len(self.site_energies or []) + 1)] + [GROUND_LABEL]
        return ["0", "1"]

    def beta(self) -> float:
        if self.beta_fs is not None:
            return float(self.beta_fs)
        return beta_from_temperature(self.temperature_k)

    def energy(self, value: float) -> float:
        """Converts an energy from the configured unit to fs^-1."""
        if self.energy_unit == "cm-1":
            return float(wavenumber_to_angular_frequency(value))
        return float(value)


class QuadratureConfig(_Section):
    order: PositiveInt = 20
    panels_per_period: PositiveInt = 4
    cutoff_factor: PositiveFloat = 200.0

    def to_settings(self) -> QuadratureSettings:
        return QuadratureSettings(
            order=self.order,
            panels_per_period=self.panels_per_period,
            cutoff_factor=self.cutoff_factor,
        )


class NumericsConfig(_Section):
    dt: PositiveFloat
    n_map_steps: PositiveInt
    mem_len: PositiveInt
    n_tensors: Optional[PositiveInt] = None
    tau_mem: Optional[PositiveFloat] = None
    propagate_to: PositiveFloat
    kernel_mode: Literal["interaction", "short_time"] = "interaction"
    quadrature: QuadratureConfig = Field(default_factory=QuadratureConfig)

    @property
    def propagation_steps(self) -> int:
        return int(round(self.propagate_to / self.dt))

    @property
    def tensor_count(self) -> int:
        return self.n_tensors if self.n_tensors is not None else self.n_map_steps


# --- Jumps ---
class JumpOperatorConfig(_Section):
    site: Optional[PositiveInt] = None
    timescale_ps: Optional[PositiveFloat] = None
    matrix: Optional[List[List[float]]] = None
    matrix_imag: Optional[List[List[float]]] = None
    label: Optional[str] = None

    @model_validator(mode="after")
    def _check_form(self):
        site_form = self.site is not None or self.timescale_ps is not None
        matrix_form = self.matrix is not None
        if site_form == matrix_form:
            raise ValueError("a jump operator needs either {site, timescale_ps} or matrix")
        if site_form and (self.site is None or self.timescale_ps is None):
            raise ValueError("site-based jump operators need both site and timescale_ps")
        if self.matrix_imag is not None and not matrix_form:
            raise ValueError("matrix_imag requires matrix")
        return self


class JumpSetConfig(_Section):
    label: str = Field(min_length=1)
    operators: List[JumpOperatorConfig] = Field(default_factory=list)


class OutputsConfig(_Section):
    directory: str = "results"
    observables: List[str] = Field(default_factory=lambda: ["populations"])

    @field_validator("observables")
    @classmethod
    def _check_observables(cls, value: List[str]) -> List[str]:
        bad = [v for v in value if not OBSERVABLE_PATTERN.match(v)]
        if bad:
            raise ValueError(f"unknown observable(s) {bad}; use populations, density_matrix or coherence:<a>-<b>")
        return value


class RunConfig(_Section):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    schema_version: Literal["pil-run/1"] = Field(SCHEMA_VERSION, alias="schema")
    model: ModelConfig
    numerics: NumericsConfig
    jump_sets: List[JumpSetConfig] = Field(default_factory=lambda: [JumpSetConfig(label="no-jumps")])
    outputs: OutputsConfig = Field(default_factory=OutputsConfig)

    @model_validator(mode="after")
    def _check_run(self):
        num = self.numerics
        if num.propagate_to < num.n_map_steps * num.dt * (1 - 1e-12):
            raise ValueError(
                f"propagate_to ({num.propagate_to} fs) must be >= n_map_steps * dt ({num.n_map_steps * num.dt} fs)"
            )
        if num.mem_len > num.n_map_steps:
            raise ValueError(f"mem_len ({num.mem_len}) must be <= n_map_steps ({num.n_map_steps})")
        if num.n_tensors is not None and num.n_tensors > num.n_map_steps:
            raise ValueError(f"n_tensors ({num.n_tensors}) must be <= n_map_steps ({num.n_map_steps})")
        labels = [js.label for js in self.jump_sets]
        if len(set(labels)) != len(labels):
            raise ValueError(f"jump set labels must be unique, got {labels}")
        if not self.jump_sets:
            raise ValueError("at least one jump set is required")
        return self


# --- Loading / dumping ---
def _format_validation_error(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        location = ".".join(str(p) for p in item.get("loc", ()))
        parts.append(f"{location or '<root>'}: {item.get('msg')}")
    return "; ".join(parts)


def parse_config(data: dict) -> RunConfig:
    """Validates a mapping against the run schema."""
    if not isinstance(data, dict):
        raise InputValidationError("Run configuration must be a mapping")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise InputValidationError(f"Invalid run configuration: {_format_validation_error(e)}") from e


def load_config(path: str) -> RunConfig:
    """Reads and validates a YAML run configuration."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as e:
        raise InputValidationError(f"Cannot read config '{path}': {e}") from e
    except yaml.YAMLError as e:
        raise InputValidationError(f"Config '{path}' is not valid YAML: {e}") from e
    config = parse_config(data)
    log.info(f"Loaded run configuration '{path}' ({config.model.kind}, {len(config.jump_sets)} jump set(s))")
    return config


def config_to_dict(config: RunConfig) -> dict:
    return config.model_dump(mode="python", by_alias=True, exclude_none=True)


def dump_config(config: RunConfig) -> str:
    return yaml.safe_dump(config_to_dict(config), sort_keys=False)


def save_config(config: RunConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_config(config))


# --- Construction of physics objects ---
def _resolve(path: str, base_dir: Optional[str]) -> str:
    if base_dir and not os.path.isabs(path):
        return os.path.join(base_dir, path)
    return path


def build_bath(bath: BathConfig, model_cfg: ModelConfig, base_dir: Optional[str] = None) -> BathSpec:
    if isinstance(bath, OhmicBathConfig):
        sd = OhmicExponential(xi=bath.xi, omega_c=model_cfg.energy(bath.omega_c))
    elif isinstance(bath, DrudeBathConfig):
        sd = DrudeLorentz(reorganization=model_cfg.energy(bath.reorganization), cutoff=model_cfg.energy(bath.cutoff))
    else:
        sd = load_tabulated_spectral_density(_resolve(bath.path, base_dir))
    return BathSpec(spectral_density=sd, beta=model_cfg.beta())


def build_model(model_cfg: ModelConfig, base_dir: Optional[str] = None) -> SystemModel:
    """Builds the SystemModel described by the model section (no jump operators)."""
    baths = [build_bath(b, model_cfg, base_dir) for b in model_cfg.baths]
    if model_cfg.kind == "spin_boson":
        model = spin_boson(model_cfg.energy(model_cfg.eps), model_cfg.energy(model_cfg.delta), baths[0])
    else:
        n_sites = len(model_cfg.site_energies)
        if len(baths) == 1:
            baths = baths * n_sites
        energies = [model_cfg.energy(e) for e in model_cfg.site_energies]
        couplings = np.array([[model_cfg.energy(c) for c in row] for row in model_cfg.couplings])
        model = frenkel_with_ground(energies, couplings, baths)
    for i, bath in enumerate(model.baths, start=1):
        log.info(
            f"Bath {i}: {bath.spectral_density.kind}, reorganization energy "
            f"{bath.spectral_density.reorganization_energy():.4e} fs^-1, beta={bath.beta:.4g} fs"
        )
    return model


def build_jump_operators(jump_set: JumpSetConfig, model_cfg: ModelConfig, dim: int) -> Tuple[JumpOperator, ...]:
    operators = []
    for i, op in enumerate(jump_set.operators):
        if op.matrix is not None:
            matrix = np.array(op.matrix, dtype=complex)
            if op.matrix_imag is not None:
                matrix = matrix + 1j * np.array(op.matrix_imag, dtype=float)
            if matrix.shape != (dim, dim):
                raise InputValidationError(
                    f"Jump set '{jump_set.label}' operator {i}: matrix shape {matrix.shape}, expected {(dim, dim)}"
                )
            operators.append(JumpOperator(matrix, op.label or f"{jump_set.label}[{i}]"))
        else:
            if model_cfg.kind != "frenkel":
                raise InputValidationError(
                    f"Jump set '{jump_set.label}': site-based operators need a frenkel model; give a matrix instead"
                )
            jump = extraction_jump(dim - 1, op.site, op.timescale_ps)
            operators.append(JumpOperator(jump.matrix, op.label or jump.label))
    return tuple(operators)


def build_jump_sets(config: RunConfig, dim: int) -> Dict[str, Tuple[JumpOperator, ...]]:
    """Jump operators per jump set label, in configuration order."""
    return {js.label: build_jump_operators(js, config.model, dim) for js in config.jump_sets}
