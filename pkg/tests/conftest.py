import pytest
from hypothesis import HealthCheck, settings

from cdi import rate_models as rm
from cdi.simulation import SimConfig

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def kingman():
    return rm.preset("kingman")


@pytest.fixture(scope="session")
def geometric():
    return rm.preset("geometric")


@pytest.fixture()
def cfg():
    return SimConfig(seed=20240817, replicates=2000)
