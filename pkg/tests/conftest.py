import numpy as np
import pytest

from src.bath import BathSpec, DrudeLorentz, OhmicExponential


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def drude_bath():
    # weak, fast bath in fs^-1 / fs
    return BathSpec(DrudeLorentz(reorganization=0.005, cutoff=0.05), beta=10.0)


@pytest.fixture
def zero_bath():
    return BathSpec(DrudeLorentz(reorganization=0.0, cutoff=0.05), beta=10.0)


@pytest.fixture
def ohmic_bath():
    return BathSpec(OhmicExponential(xi=0.1, omega_c=0.25), beta=20.0)

