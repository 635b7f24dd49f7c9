import pytest
from hypothesis import HealthCheck, settings

from pointer_states import NATURAL, GridSpec, SpinAmplitudes, assemble_initial, build_state
from pointer_states.params import Bath, derive_constants

settings.register_profile(
    "default", max_examples=200, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("default")


@pytest.fixture(scope="session")
def natural():
    return NATURAL


@pytest.fixture(scope="session")
def dc():
    return derive_constants(NATURAL)


@pytest.fixture(scope="session")
def dc_high():
    return derive_constants(NATURAL.replace(bath=Bath.high(10.0)))


@pytest.fixture(scope="session")
def grid():
    return GridSpec(256, 256, 16.0, 12.0)


@pytest.fixture(scope="session")
def small_grid():
    return GridSpec(128, 128, 12.0, 10.0)


@pytest.fixture(scope="session")
def coherent_rho(grid):
    phi = build_state("coherent", NATURAL, x0=1.0, p0=0.0)
    return assemble_initial(phi, SpinAmplitudes(), grid)
