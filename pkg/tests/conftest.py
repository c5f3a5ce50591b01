import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from interplan import kernels
from interplan.types import TimeGrid

settings.register_profile(
    "interplan",
    deadline=None,  # first call into a compiled kernel is not representative
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("interplan")


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the active kernel backend once, outside any timed test."""
    kernels.warmup()


@pytest.fixture()
def grid():
    return TimeGrid()


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
