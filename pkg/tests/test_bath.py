import numpy as np
import pytest
from scipy import integrate

from src.bath import (
    BathSpec,
    DrudeLorentz,
    EtaCoefficients,
    OhmicExponential,
    QuadratureSettings,
    Tabulated,
    bath_response,
    eta_coefficients,
    eta_coefficients_time_domain,
    load_tabulated_spectral_density,
)
from src.core import wavenumber_to_angular_frequency
from src.exceptions import InputValidationError, QuadratureError


def drude_response(lam, gamma, beta, t, n_terms=4000):
    """Closed-form C(t > 0) of a Drude-Lorentz bath.

    The Matsubara series is split into ``sum exp(-nu_k t) / nu_k`` (summed to a
    logarithm) and a quickly converging remainder.
    """
    nu = 2.0 * np.pi * np.arange(1, n_terms + 1) / beta
    lead = lam * gamma * (1.0 / np.tan(0.5 * beta * gamma) - 1j) * np.exp(-gamma * t)
    log_sum = -(beta / (2.0 * np.pi)) * np.log(-np.expm1(-2.0 * np.pi * t / beta))
    rest = np.sum(gamma**2 / (nu * (nu**2 - gamma**2)) * np.exp(-nu * t))
    return lead + (4.0 * lam * gamma / beta) * (log_sum + rest)


def ohmic_zero_temperature_response(xi, omega_c, t):
    return 0.5 * xi * omega_c**2 / (1.0 + 1j * omega_c * t) ** 2


# --- Spectral densities ---
def test_drude_lorentz_peaks_at_cutoff():
    sd = DrudeLorentz(reorganization=0.005, cutoff=0.05)
    assert sd(0.05) == pytest.approx(0.005)
    assert sd(0.0) == 0.0
    assert sd.reorganization_energy() == 0.005


def test_ohmic_reorganization_energy():
    sd = OhmicExponential(xi=0.1, omega_c=0.25)
    assert sd.reorganization_energy() == pytest.approx(0.0125)
    assert sd.j_over_omega(0.0) == pytest.approx(0.5 * np.pi * 0.1)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"reorganization": -1.0, "cutoff": 0.1},
        {"reorganization": 1.0, "cutoff": 0.0},
    ],
)
def test_drude_lorentz_rejects_bad_parameters(kwargs):
    with pytest.raises(InputValidationError):
        DrudeLorentz(**kwargs)


def test_tabulated_interpolates_and_vanishes_outside_grid():
    sd = Tabulated(omega=np.array([0.0, 1.0, 2.0]), values=np.array([0.0, 2.0, 0.0]))
    assert sd(0.5) == pytest.approx(1.0)
    assert sd(3.0) == 0.0
    assert sd.j_over_omega(0.0) == pytest.approx(2.0)
    assert sd.j_over_omega(0.5) == pytest.approx(2.0)
    assert sd.upper_limit == 2.0


@pytest.mark.parametrize(
    "omega, values, message",
    [
        ([0.0, 2.0, 1.0], [0.0, 1.0, 1.0], "ascending"),
        ([0.0, 1.0], [0.0, -1.0], "non-negative"),
        ([0.0, 1.0], [0.5, 1.0], "vanish"),
        ([0.0, np.nan], [0.0, 1.0], "non-finite"),
    ],
)
def test_tabulated_validation(omega, values, message):
    with pytest.raises(InputValidationError, match=message):
        Tabulated(omega=np.array(omega), values=np.array(values))


def test_tabulated_reorganization_energy_matches_drude():
    drude = DrudeLorentz(reorganization=0.005, cutoff=0.05)
    grid = np.linspace(0.0, 200 * 0.05, 200001)
    sd = Tabulated(omega=grid, values=drude(grid))
    # the grid truncates the 1/w^2 tail, worth about (2/pi)(gamma/W)
    assert sd.reorganization_energy() == pytest.approx(0.005, rel=5e-3)


def test_load_tabulated_spectral_density_converts_wavenumbers(tmp_path):
    path = tmp_path / "jw.txt"
    path.write_text("# w  J(w)\n0 0\n100 50\n200 20\n")
    sd = load_tabulated_spectral_density(str(path))
    assert sd.omega[1] == pytest.approx(wavenumber_to_angular_frequency(100.0))
    assert sd.values[1] == pytest.approx(wavenumber_to_angular_frequency(50.0))


def test_load_tabulated_spectral_density_rejects_bad_files(tmp_path):
    with pytest.raises(InputValidationError, match="Could not read"):
        load_tabulated_spectral_density(str(tmp_path / "missing.txt"))
    path = tmp_path / "three.txt"
    path.write_text("0 0 0\n1 1 1\n")
    with pytest.raises(InputValidationError, match="two columns"):
        load_tabulated_spectral_density(str(path))


def test_bath_spec_rejects_non_positive_beta():
    with pytest.raises(InputValidationError, match="beta"):
        BathSpec(DrudeLorentz(0.005, 0.05), beta=0.0)


def test_omega_coth_limits():
    spec = BathSpec(DrudeLorentz(0.005, 0.05), beta=4.0)
    assert spec.omega_coth(0.0) == pytest.approx(0.5)
    assert spec.omega_coth(100.0) == pytest.approx(100.0)
    cold = BathSpec(DrudeLorentz(0.005, 0.05), beta=np.inf)
    assert cold.omega_coth(0.3) == pytest.approx(0.3)


# --- Bath response ---
@pytest.mark.parametrize("t", [1.0, 4.0, 10.0])
def test_ohmic_response_at_zero_temperature(t):
    spec = BathSpec(OhmicExponential(xi=0.1, omega_c=0.25), beta=np.inf)
    expected = ohmic_zero_temperature_response(0.1, 0.25, t)
    assert bath_response(spec, t) == pytest.approx(expected, rel=1e-8)


def test_ohmic_response_at_zero_time_is_real_and_positive(ohmic_bath):
    c0 = bath_response(ohmic_bath, 0.0)
    assert c0.imag == 0.0
    assert c0.real > 0.0
    cold = BathSpec(OhmicExponential(xi=0.1, omega_c=0.25), beta=np.inf)
    assert bath_response(cold, 0.0).real == pytest.approx(0.5 * 0.1 * 0.25**2, rel=1e-10)


def test_response_is_conjugate_symmetric(ohmic_bath):
    assert bath_response(ohmic_bath, -3.0) == pytest.approx(np.conj(bath_response(ohmic_bath, 3.0)))


@pytest.mark.parametrize("t", [5.0, 10.0, 20.0])
def test_drude_response_matches_closed_form(drude_bath, t):
    expected = drude_response(0.005, 0.05, 10.0, t)
    assert bath_response(drude_bath, t) == pytest.approx(expected, rel=1e-6)


@pytest.mark.parametrize("multiple", [1, 2, 5])
def test_drude_response_high_temperature_limit(multiple):
    lam, gamma, beta = 0.01, 0.02, 2.5
    spec = BathSpec(DrudeLorentz(reorganization=lam, cutoff=gamma), beta=beta)
    t = multiple * beta
    c = bath_response(spec, t)
    assert c.real == pytest.approx(2.0 * lam / beta * np.exp(-gamma * t), rel=2e-2)
    assert c.imag == pytest.approx(-lam * gamma * np.exp(-gamma * t), rel=2e-2)


def test_drude_response_at_zero_time_raises(drude_bath):
    with pytest.raises(QuadratureError):
        bath_response(drude_bath, 0.0)


def test_zero_bath_response_is_zero(zero_bath):
    assert bath_response(zero_bath, 2.0) == 0j


# --- eta coefficients ---
def test_eta_table_lookup():
    eta = EtaCoefficients(dt=2.0, n_steps=2, eta_diag=1 + 1j, eta_offdiag=[2.0, 3.0])
    assert eta.lag(0) == 1 + 1j
    assert eta.lag(2) == 3.0
    assert eta.as_array().tolist() == [1 + 1j, 2.0, 3.0]
    with pytest.raises(InputValidationError, match="exceeds"):
        eta.lag(3)


def test_eta_coefficients_validate_arguments(drude_bath):
    with pytest.raises(InputValidationError):
        eta_coefficients(drude_bath, 0.0, 3)
    with pytest.raises(InputValidationError):
        eta_coefficients(drude_bath, 1.0, 0)


def test_zero_bath_eta_is_zero(zero_bath):
    eta = eta_coefficients(zero_bath, 3.0, 4)
    assert not np.any(eta.as_array())


@pytest.mark.parametrize("beta", [10.0, 40.0])
@pytest.mark.parametrize("dt", [2.0, 3.0])
def test_eta_matches_time_domain_reference(beta, dt):
    lam, gamma = 0.005, 0.05
    spec = BathSpec(DrudeLorentz(reorganization=lam, cutoff=gamma), beta=beta)
    fast = eta_coefficients(spec, dt, 3)
    reference = eta_coefficients_time_domain(
        spec, dt, 3, response=lambda t: drude_response(lam, gamma, beta, t)
    )
    np.testing.assert_allclose(fast.as_array(), reference.as_array(), rtol=1e-8, atol=1e-14)


def test_triangular_weight_equals_double_step_integral():
    lam, gamma, beta, dt, lag = 0.005, 0.05, 10.0, 2.0, 2
    spec = BathSpec(DrudeLorentz(reorganization=lam, cutoff=gamma), beta=beta)

    def response(t):
        return drude_response(lam, gamma, beta, t)

    reduced = eta_coefficients_time_domain(spec, dt, lag, response=response).eta_offdiag[lag - 1]

    def double_integral(part):
        value, _ = integrate.dblquad(
            lambda s2, s1: part(response(lag * dt + s1 - s2)), 0.0, dt, 0.0, dt, epsabs=1e-15, epsrel=1e-11
        )
        return value

    direct = complex(double_integral(np.real), double_integral(np.imag))
    assert direct.real == pytest.approx(reduced.real, rel=1e-8)
    assert direct.imag == pytest.approx(reduced.imag, rel=1e-8)


def test_eta_real_part_of_diagonal_is_positive(drude_bath):
    eta = eta_coefficients(drude_bath, 3.0, 2)
    assert eta.eta_diag.real > 0
    assert eta.eta_diag.imag < 0


def test_eta_is_stable_under_quadrature_refinement(ohmic_bath):
    settings = QuadratureSettings()
    coarse = eta_coefficients(ohmic_bath, 2.0, 4, settings)
    fine = eta_coefficients(ohmic_bath, 2.0, 4, settings.refined())
    np.testing.assert_allclose(coarse.as_array(), fine.as_array(), rtol=1e-10, atol=1e-15)


def test_tabulated_eta_matches_analytic_density():
    ohmic = OhmicExponential(xi=0.1, omega_c=0.25)
    grid = np.linspace(0.0, 40 * 0.25, 4001)
    analytic = eta_coefficients(BathSpec(ohmic, beta=20.0), 2.0, 3)
    tabulated = eta_coefficients(BathSpec(Tabulated(omega=grid, values=ohmic(grid)), beta=20.0), 2.0, 3)
    np.testing.assert_allclose(tabulated.as_array(), analytic.as_array(), rtol=1e-3)


def test_eta_magnitude_decays_with_lag(drude_bath):
    magnitudes = np.abs(eta_coefficients(drude_bath, 3.0, 10).eta_offdiag)
    assert np.all(np.diff(magnitudes[1:]) < 0)
