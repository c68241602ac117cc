"""Builders for the spin-boson and Frenkel-exciton (+ ground state) models."""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.bath import BathSpec, DrudeLorentz, OhmicExponential, Tabulated
from src.core import validate_hamiltonian
from src.exceptions import InputValidationError
from src.lindblad import JumpOperator

log = logging.getLogger(__name__)

PS_TO_FS = 1000.0
GROUND_LABEL = "g"


@dataclass(frozen=True, eq=False)
class SystemModel:
    """System Hamiltonian, its baths and optional jump operators.

    Attributes:
        H0: d x d Hermitian Hamiltonian in fs^-1.
        baths: One BathSpec per bath, each with a length-d coupling_diag.
        jumps: Jump operators attached to the model.
        basis_labels: Names of the d basis states.
    """

    H0: np.ndarray
    baths: Tuple[BathSpec, ...]
    jumps: Tuple[JumpOperator, ...] = ()
    basis_labels: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        h0 = validate_hamiltonian(self.H0, tol=1e-12)
        h0 = h0.copy()
        h0.setflags(write=False)
        object.__setattr__(self, "H0", h0)
        dim = h0.shape[0]
        baths = tuple(self.baths)
        for i, bath in enumerate(baths):
            if len(bath.coupling_diag) != dim:
                raise InputValidationError(
                    f"Bath {i} coupling_diag has length {len(bath.coupling_diag)}, expected {dim}"
                )
        object.__setattr__(self, "baths", baths)
        jumps = tuple(self.jumps)
        for jump in jumps:
            if jump.dim != dim:
                raise InputValidationError(f"Jump '{jump.label}' has d={jump.dim}, model d={dim}")
        object.__setattr__(self, "jumps", jumps)
        labels = tuple(self.basis_labels) or tuple(str(i) for i in range(dim))
        if len(labels) != dim or len(set(labels)) != dim:
            raise InputValidationError(f"Need {dim} distinct basis labels, got {labels}")
        object.__setattr__(self, "basis_labels", labels)

    @property
    def dim(self) -> int:
        return self.H0.shape[0]

    def index_of(self, label: str) -> int:
        try:
            return self.basis_labels.index(str(label))
        except ValueError:
            raise InputValidationError(
                f"Unknown basis label '{label}', expected one of {list(self.basis_labels)}"
            ) from None

    def fingerprint(self) -> str:
        """Content hash of the physics of the model; jump operators are excluded."""
        payload = {
            "H0_re": np.real(self.H0).tolist(),
            "H0_im": np.imag(self.H0).tolist(),
            "labels": list(self.basis_labels),
            "baths": [_bath_payload(b) for b in self.baths],
        }
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _bath_payload(bath: BathSpec) -> dict:
    sd = bath.spectral_density
    if isinstance(sd, OhmicExponential):
        params = {"xi": sd.xi, "omega_c": sd.omega_c}
    elif isinstance(sd, DrudeLorentz):
        params = {"reorganization": sd.reorganization, "cutoff": sd.cutoff}
    elif isinstance(sd, Tabulated):
        params = {"omega": sd.omega.tolist(), "values": sd.values.tolist()}
    else:
        raise InputValidationError(f"Unsupported spectral density {type(sd).__name__}")
    return {
        "kind": sd.kind,
        "params": params,
        "beta": "inf" if np.isinf(bath.beta) else bath.beta,
        "coupling": list(bath.coupling_diag),
    }


def spin_boson(eps: float, delta: float, bath: BathSpec) -> SystemModel:
    """Two-level system ``H0 = eps sigma_z + delta sigma_x`` with a sigma_z bath."""
    h0 = np.array([[eps, delta], [delta, -eps]], dtype=complex)
    return SystemModel(
        H0=h0,
        baths=(bath.with_coupling((1.0, -1.0)),),
        basis_labels=("0", "1"),
    )


def extraction_jump(n_sites: int, site: int, timescale_ps: float) -> JumpOperator:
    """``gamma |g><site|`` for a Frenkel model with ``n_sites`` sites (1-based ``site``)."""
    if not 1 <= site <= n_sites:
        raise InputValidationError(f"Extraction site {site} out of range 1..{n_sites}")
    return JumpOperator.lowering(
        dim=n_sites + 1,
        target=n_sites,
        source=site - 1,
        timescale_fs=timescale_ps * PS_TO_FS,
        label=f"extract site {site} ({timescale_ps:g} ps)",
    )


def frenkel_with_ground(
    site_energies: Sequence[float],
    couplings,
    site_baths: Sequence[BathSpec],
    extraction: Optional[Tuple[int, float]] = None,
) -> SystemModel:
    """N-site Frenkel Hamiltonian with the global ground state |g> appended last.

    Args:
        site_energies: N site energies (fs^-1).
        couplings: Symmetric N x N coupling matrix with zero diagonal (fs^-1).
        site_baths: One bath per site; its coupling_diag is replaced by the site indicator.
        extraction: Optional ``(site, timescale_ps)`` adding ``gamma |g><site|``
            with ``gamma^2 = 1 / timescale``.

    Returns:
        SystemModel: Model of dimension N + 1 labelled "1".."N", "g".
    """
    energies = np.asarray(site_energies, dtype=float)
    n_sites = energies.size
    if energies.ndim != 1 or n_sites == 0:
        raise InputValidationError("site_energies must be a non-empty list")
    coupling_matrix = np.asarray(couplings, dtype=float)
    if coupling_matrix.shape != (n_sites, n_sites):
        raise InputValidationError(f"couplings must be {n_sites}x{n_sites}, got {coupling_matrix.shape}")
    if not np.allclose(coupling_matrix, coupling_matrix.T, rtol=0.0, atol=1e-12):
        raise InputValidationError("couplings must be symmetric")
    if np.any(np.diag(coupling_matrix) != 0):
        raise InputValidationError("couplings must have a zero diagonal")
    if len(site_baths) != n_sites:
        raise InputValidationError(f"Need one bath per site ({n_sites}), got {len(site_baths)}")

    dim = n_sites + 1
    h0 = np.zeros((dim, dim), dtype=complex)
    h0[:n_sites, :n_sites] = coupling_matrix + np.diag(energies)
    baths: List[BathSpec] = []
    for k, bath in enumerate(site_baths):
        indicator = np.zeros(dim)
        indicator[k] = 1.0
        baths.append(bath.with_coupling(indicator))

    jumps: Tuple[JumpOperator, ...] = ()
    if extraction is not None:
        site, timescale_ps = extraction
        jumps = (extraction_jump(n_sites, site, timescale_ps),)

    labels = tuple(str(i) for i in range(1, n_sites + 1)) + (GROUND_LABEL,)
    model = SystemModel(H0=h0, baths=tuple(baths), jumps=jumps, basis_labels=labels)
    for k, bath in enumerate(model.baths, start=1):
        log.debug(f"Site {k} bath reorganization energy: {bath.spectral_density.reorganization_energy():.4e} fs^-1")
    return model
