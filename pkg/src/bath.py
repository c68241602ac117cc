"""Harmonic bath models: spectral densities, the bath response function and
the eta-coefficients that enter the discretized influence functional.

Conventions (hbar = 1, frequencies in fs^-1, beta in fs)::

    C(t) = (1/pi) int_0^inf J(w) [coth(beta w / 2) cos(w t) - i sin(w t)] dw

For a step-constant path the double time integrals of C over the steps are
done analytically inside the frequency integral.  With ``S(w) = 4 sin^2(w dt/2) / w^2``
and ``tau = lag * dt``::

    eta_lag = (1/pi)  int J(w) S(w) [coth cos(w tau) - i sin(w tau)] dw      (lag >= 1)
    eta_0   = (1/2pi) int J(w) S(w) coth dw
              - (i/pi) int J(w) (w dt - sin(w dt)) / w^2 dw

The frequency integrals are split into a Gauss-Legendre head on ``[0, W]`` and
a QUADPACK tail on ``[W, inf)`` that uses Fourier weights.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate

from src.core import wavenumber_to_angular_frequency
from src.exceptions import InputValidationError, QuadratureError

log = logging.getLogger(__name__)

QUAD_EPSABS = 1e-13
QUAD_EPSREL = 1e-11
QUAD_LIMIT = 500


# --- Spectral densities ---
@dataclass(frozen=True)
class OhmicExponential:
    """``J(w) = (pi/2) xi w exp(-w / omega_c)``."""

    xi: float
    omega_c: float
    kind: str = field(default="ohmic_exponential", init=False)

    def __post_init__(self):
        if self.xi < 0 or not self.omega_c > 0:
            raise InputValidationError(f"Ohmic bath needs xi >= 0 and omega_c > 0, got {self.xi}, {self.omega_c}")

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        return omega * self.j_over_omega(omega)

    def j_over_omega(self, omega):
        omega = np.asarray(omega, dtype=float)
        return 0.5 * np.pi * self.xi * np.exp(-omega / self.omega_c)

    @property
    def is_zero(self) -> bool:
        return self.xi == 0

    @property
    def characteristic_frequency(self) -> float:
        return self.omega_c

    @property
    def upper_limit(self) -> Optional[float]:
        return None

    def reorganization_energy(self) -> float:
        return 0.5 * self.xi * self.omega_c


@dataclass(frozen=True)
class DrudeLorentz:
    """``J(w) = 2 lambda gamma w / (w^2 + gamma^2)``."""

    reorganization: float
    cutoff: float
    kind: str = field(default="drude_lorentz", init=False)

    def __post_init__(self):
        if self.reorganization < 0 or not self.cutoff > 0:
            raise InputValidationError(
                f"Drude-Lorentz bath needs lambda >= 0 and gamma > 0, got {self.reorganization}, {self.cutoff}"
            )

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        return omega * self.j_over_omega(omega)

    def j_over_omega(self, omega):
        omega = np.asarray(omega, dtype=float)
        return 2.0 * self.reorganization * self.cutoff / (omega**2 + self.cutoff**2)

    @property
    def is_zero(self) -> bool:
        return self.reorganization == 0

    @property
    def characteristic_frequency(self) -> float:
        return self.cutoff

    @property
    def upper_limit(self) -> Optional[float]:
        return None

    def reorganization_energy(self) -> float:
        return self.reorganization


@dataclass(frozen=True, eq=False)
class Tabulated:
    """Linearly interpolated spectral density, zero outside the grid."""

    omega: np.ndarray
    values: np.ndarray
    kind: str = field(default="tabulated", init=False)

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if omega.ndim != 1 or omega.shape != values.shape or omega.size < 2:
            raise InputValidationError("Tabulated spectral density needs two equal-length 1-D arrays (>= 2 points)")
        if not np.all(np.isfinite(omega)) or not np.all(np.isfinite(values)):
            raise InputValidationError("Tabulated spectral density contains non-finite values")
        if np.any(np.diff(omega) <= 0):
            raise InputValidationError("Tabulated frequency grid must be strictly ascending")
        if omega[0] < 0:
            raise InputValidationError("Tabulated frequency grid must start at w >= 0")
        if np.any(values < 0):
            raise InputValidationError("Tabulated spectral density must be non-negative")
        if omega[0] == 0 and values[0] != 0:
            raise InputValidationError("Tabulated spectral density must vanish at w = 0")
        omega.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "values", values)

    def __call__(self, omega):
        return np.interp(np.asarray(omega, dtype=float), self.omega, self.values, left=0.0, right=0.0)

    def j_over_omega(self, omega):
        omega = np.asarray(omega, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(omega > 0, self(omega) / np.where(omega > 0, omega, 1.0), 0.0)
        if self.omega[0] == 0:
            slope = (self.values[1] - self.values[0]) / (self.omega[1] - self.omega[0])
            ratio = np.where(omega == 0, slope, ratio)
        return ratio

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values)

    @property
    def characteristic_frequency(self) -> float:
        weights = self.values
        if not np.any(weights):
            return float(self.omega[-1])
        return float(np.sum(weights * self.omega) / np.sum(weights))

    @property
    def upper_limit(self) -> Optional[float]:
        return float(self.omega[-1])

    def reorganization_energy(self) -> float:
        return float(integrate.trapezoid(self.j_over_omega(self.omega), self.omega) / np.pi)


SpectralDensity = Union[OhmicExponential, DrudeLorentz, Tabulated]


def load_tabulated_spectral_density(path: str) -> Tabulated:
    """Reads a two-column text file (w in cm^-1, J in cm^-1, '#' comments)."""
    try:
        table = np.loadtxt(path, comments="#", ndmin=2)
    except (OSError, ValueError) as e:
        raise InputValidationError(f"Could not read spectral density file '{path}': {e}") from e
    if table.shape[1] != 2:
        raise InputValidationError(f"Spectral density file '{path}' must have exactly two columns")
    return Tabulated(
        omega=wavenumber_to_angular_frequency(table[:, 0]),
        values=wavenumber_to_angular_frequency(table[:, 1]),
    )


# --- Bath specification ---
@dataclass(frozen=True, eq=False)
class BathSpec:
    """One harmonic bath coupled through a diagonal system operator.

    Args:
        spectral_density: J(w) of the bath.
        beta: Inverse temperature in fs; ``np.inf`` for zero temperature.
        coupling_diag: Eigenvalues of the coupling operator in the site basis.
    """

    spectral_density: SpectralDensity
    beta: float
    coupling_diag: Tuple[float, ...] = ()

    def __post_init__(self):
        if not (self.beta > 0):
            raise InputValidationError(f"beta must be positive (or inf), got {self.beta}")
        coupling = tuple(float(c) for c in np.asarray(self.coupling_diag, dtype=float).ravel())
        if not all(np.isfinite(coupling)):
            raise InputValidationError("coupling_diag contains non-finite values")
        object.__setattr__(self, "coupling_diag", coupling)

    def with_coupling(self, coupling_diag: Sequence[float]) -> "BathSpec":
        return replace(self, coupling_diag=tuple(coupling_diag))

    def omega_coth(self, omega):
        """``w coth(beta w / 2)``, finite at w = 0 (value ``2 / beta``)."""
        omega = np.asarray(omega, dtype=float)
        if np.isinf(self.beta):
            return omega.copy()
        x = 0.5 * self.beta * omega
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(np.abs(x) < 1e-6, 1.0 + x**2 / 3.0, x / np.tanh(x))
        return (2.0 / self.beta) * ratio


@dataclass(frozen=True)
class QuadratureSettings:
    """Resolution of the frequency-domain eta quadrature.

    ``panels_per_period`` Gauss-Legendre panels of ``order`` nodes cover the
    shortest relevant oscillation period; the head extends to
    ``cutoff_factor`` times the bath's characteristic frequency.
    """

    order: int = 20
    panels_per_period: int = 4
    cutoff_factor: float = 200.0

    def refined(self) -> "QuadratureSettings":
        return replace(self, order=2 * self.order, panels_per_period=2 * self.panels_per_period)


@dataclass(frozen=True, eq=False)
class EtaCoefficients:
    """Discretized influence coefficients of one bath.

    ``eta_offdiag[lag - 1]`` holds eta for ``lag = 1 .. n_steps``.
    """

    dt: float
    n_steps: int
    eta_diag: complex
    eta_offdiag: np.ndarray

    def __post_init__(self):
        offdiag = np.array(self.eta_offdiag, dtype=complex)
        if offdiag.shape != (self.n_steps,):
            raise InputValidationError(f"eta_offdiag must have {self.n_steps} entries, got {offdiag.shape}")
        offdiag.setflags(write=False)
        object.__setattr__(self, "eta_offdiag", offdiag)
        object.__setattr__(self, "eta_diag", complex(self.eta_diag))

    def lag(self, lag: int) -> complex:
        if lag == 0:
            return self.eta_diag
        if not 1 <= lag <= self.n_steps:
            raise InputValidationError(f"Lag {lag} exceeds the eta table (n_steps={self.n_steps})")
        return complex(self.eta_offdiag[lag - 1])

    def as_array(self) -> np.ndarray:
        """eta indexed by lag ``0 .. n_steps``."""
        return np.concatenate([[self.eta_diag], self.eta_offdiag])


# --- Quadrature helpers ---
def _quad(func: Callable, a: float, b: float, label: str, **kwargs) -> Tuple[float, float]:
    """Wraps scipy.integrate.quad and raises QuadratureError on failure."""
    kwargs.setdefault("epsabs", QUAD_EPSABS)
    kwargs.setdefault("limit", QUAD_LIMIT)
    if kwargs.get("weight") in ("cos", "sin") and np.isinf(b):
        kwargs.setdefault("limlst", 200)
    else:
        kwargs.setdefault("epsrel", QUAD_EPSREL)
    result = integrate.quad(func, a, b, full_output=1, **kwargs)
    value, abserr = result[0], result[1]
    flagged = len(result) > 3
    tolerance = max(1e3 * QUAD_EPSABS, 1e-7 * abs(value))
    if not np.isfinite(value) or (flagged and abserr > tolerance):
        message = result[3] if flagged else "non-finite result"
        raise QuadratureError(f"Quadrature for {label} did not converge: {message}", value, abserr)
    if flagged:
        log.debug(f"Quadrature for {label} flagged but within tolerance (abserr={abserr:.2e})")
    return value, abserr


def bath_response(spec: BathSpec, t: float) -> complex:
    """Bath response function C(t) by adaptive quadrature.

    Raises:
        QuadratureError: If the integral does not converge (for instance
            C(0) of a Drude-Lorentz bath, which diverges logarithmically).
    """
    t = float(t)
    if t < 0:
        return np.conj(bath_response(spec, -t))
    sd = spec.spectral_density
    if sd.is_zero:
        return 0j
    upper = sd.upper_limit if sd.upper_limit is not None else np.inf

    def real_part(w):
        return float(sd.j_over_omega(w) * spec.omega_coth(w))

    def imag_part(w):
        return float(sd.j_over_omega(w) * w)

    if t == 0:
        re, _ = _quad(real_part, 0.0, upper, "Re C(0)")
        return complex(re / np.pi, 0.0)
    re, _ = _quad(real_part, 0.0, upper, f"Re C({t})", weight="cos", wvar=t)
    im, _ = _quad(imag_part, 0.0, upper, f"Im C({t})", weight="sin", wvar=t)
    return complex(re / np.pi, -im / np.pi)


def _head_nodes(spec: BathSpec, dt: float, n_steps: int, settings: QuadratureSettings):
    """Composite Gauss-Legendre nodes and weights on ``[0, W]``."""
    sd = spec.spectral_density
    tau_max = (n_steps + 1) * dt
    scales = [2.0 * np.pi / tau_max, sd.characteristic_frequency]
    if np.isfinite(spec.beta):
        scales.append(2.0 * np.pi / spec.beta)
    width = min(scales) / settings.panels_per_period
    if sd.upper_limit is not None:
        upper = sd.upper_limit
    else:
        upper = settings.cutoff_factor * max(sd.characteristic_frequency, 2.0 * np.pi / tau_max)
    n_panels = max(1, int(np.ceil(upper / width)))
    edges = np.linspace(0.0, upper, n_panels + 1)
    if isinstance(sd, Tabulated):
        edges = np.union1d(edges, sd.omega[(sd.omega > 0) & (sd.omega < upper)])
    x, w = leggauss(settings.order)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights, upper


def _tail(func: Callable, lower: float, terms: Sequence[Tuple[float, str, float]], label: str) -> float:
    """``int_lower^inf func(w) sum_j c_j trig_j(f_j w) dw`` with Fourier-weighted quadrature."""
    total = 0.0
    for coeff, trig, freq in terms:
        if coeff == 0:
            continue
        if freq == 0:
            if trig == "sin":
                continue
            value, _ = _quad(func, lower, np.inf, f"{label} tail")
        else:
            value, _ = _quad(func, lower, np.inf, f"{label} tail", weight=trig, wvar=freq)
        total += coeff * value
    return total


def eta_coefficients(
    spec: BathSpec,
    dt: float,
    n_steps: int,
    settings: Optional[QuadratureSettings] = None,
) -> EtaCoefficients:
    """eta-coefficients for lags ``0 .. n_steps`` of a step-constant path.

    Args:
        spec: Bath description.
        dt: Time step in fs.
        n_steps: Largest lag to tabulate.
        settings: Quadrature resolution, defaults to ``QuadratureSettings()``.

    Returns:
        EtaCoefficients: Translation-invariant coefficient table.
    """
    if not dt > 0:
        raise InputValidationError(f"Time step must be positive, got {dt}")
    if n_steps < 1:
        raise InputValidationError(f"n_steps must be >= 1, got {n_steps}")
    settings = settings or QuadratureSettings()
    sd = spec.spectral_density
    if sd.is_zero:
        return EtaCoefficients(dt=dt, n_steps=n_steps, eta_diag=0j, eta_offdiag=np.zeros(n_steps, dtype=complex))

    nodes, weights, upper = _head_nodes(spec, dt, n_steps, settings)
    jw = sd.j_over_omega(nodes)
    th = spec.omega_coth(nodes)
    window = dt**2 * np.sinc(nodes * dt / (2.0 * np.pi)) ** 2
    lags = np.arange(1, n_steps + 1)
    phase = np.outer(lags * dt, nodes)

    re_off = (np.cos(phase) * (jw * th * window)) @ weights / np.pi
    im_off = -(np.sin(phase) * (jw * nodes * window)) @ weights / np.pi
    re_diag = np.sum(weights * jw * th * window) / (2.0 * np.pi)
    im_diag = np.sum(weights * jw * dt * (np.sinc(nodes * dt / np.pi) - 1.0)) / np.pi

    if sd.upper_limit is None:
        # tail: S(w) w^2 = 2 - 2 cos(w dt), so S cos(w tau) = [2 cos w tau - cos w(tau+dt) - cos w(tau-dt)] / w^2
        def re_kernel(w):
            return float(sd.j_over_omega(w) * spec.omega_coth(w) / w**2)

        def im_kernel(w):
            return float(sd.j_over_omega(w) / w)

        def jw_plain(w):
            return float(sd.j_over_omega(w))

        re_diag += _tail(re_kernel, upper, [(2.0, "cos", 0.0), (-2.0, "cos", dt)], "Re eta_0") / (2.0 * np.pi)
        im_diag += (
            _tail(im_kernel, upper, [(1.0, "sin", dt)], "Im eta_0")
            - dt * _tail(jw_plain, upper, [(1.0, "cos", 0.0)], "Im eta_0")
        ) / np.pi
        for i, lag in enumerate(lags):
            tau = lag * dt
            shifts = [(2.0, tau), (-1.0, tau + dt), (-1.0, tau - dt)]
            re_off[i] += _tail(re_kernel, upper, [(c, "cos", f) for c, f in shifts], f"Re eta_{lag}") / np.pi
            im_off[i] -= _tail(im_kernel, upper, [(c, "sin", f) for c, f in shifts], f"Im eta_{lag}") / np.pi

    eta = EtaCoefficients(
        dt=dt,
        n_steps=n_steps,
        eta_diag=complex(re_diag, im_diag),
        eta_offdiag=re_off + 1j * im_off,
    )
    log.debug(f"eta coefficients (dt={dt}, n_steps={n_steps}): diag={eta.eta_diag:.6e}")
    return eta


def eta_coefficients_time_domain(
    spec: BathSpec,
    dt: float,
    n_steps: int,
    response: Optional[Callable[[float], complex]] = None,
) -> EtaCoefficients:
    """eta-coefficients by direct time-domain quadrature of C(t).

    The double integrals over a pair of steps,
    ``int_0^dt int_0^dt C(lag dt + s1 - s2) ds2 ds1``, reduce exactly to
    single integrals with a triangular weight,
    ``eta_lag = int_{-dt}^{dt} (dt - |u|) C(lag dt + u) du`` and
    ``eta_0 = int_0^dt (dt - s) C(s) ds``.  Much slower than
    :func:`eta_coefficients`; used as a reference.

    Args:
        response: C(t) to integrate; defaults to :func:`bath_response`.
    """
    if not dt > 0 or n_steps < 1:
        raise InputValidationError(f"Need dt > 0 and n_steps >= 1, got dt={dt}, n_steps={n_steps}")
    if response is None:
        if spec.spectral_density.is_zero:
            return EtaCoefficients(dt=dt, n_steps=n_steps, eta_diag=0j, eta_offdiag=np.zeros(n_steps, dtype=complex))

        def response(t):
            return bath_response(spec, t)

    def integrate_complex(func, a, b, label):
        re, _ = _quad(lambda s: float(np.real(func(s))), a, b, f"Re {label}", epsrel=1e-12)
        im, _ = _quad(lambda s: float(np.imag(func(s))), a, b, f"Im {label}", epsrel=1e-12)
        return complex(re, im)

    diag = integrate_complex(lambda s: (dt - s) * response(s), 0.0, dt, "eta_0")
    offdiag: List[complex] = []
    for lag in range(1, n_steps + 1):
        tau = lag * dt
        left = integrate_complex(lambda u: (dt + u) * response(tau + u), -dt, 0.0, f"eta_{lag}")
        right = integrate_complex(lambda u: (dt - u) * response(tau + u), 0.0, dt, f"eta_{lag}")
        offdiag.append(left + right)
    return EtaCoefficients(dt=dt, n_steps=n_steps, eta_diag=diag, eta_offdiag=np.array(offdiag))
