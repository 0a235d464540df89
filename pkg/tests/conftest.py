import numpy as np
import pytest

from gbp import fit, load_baseball, load_hospital, load_schools


@pytest.fixture(scope="session")
def hospital():
    return load_hospital()


@pytest.fixture(scope="session")
def schools():
    return load_schools()


@pytest.fixture(scope="session")
def baseball():
    return load_baseball()


@pytest.fixture(scope="session")
def hospital_fit(hospital):
    return fit(hospital)


@pytest.fixture(scope="session")
def schools_fit(schools):
    return fit(schools)


@pytest.fixture(scope="session")
def baseball_fit(baseball):
    return fit(baseball)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
