import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ucfem.mesh import build_structured_mesh

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

OMEGA = (0.25, 0.75, 0.25, 0.5)
B_REGION = (0.25, 0.75, 0.25, 0.75)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def mesh4():
    return build_structured_mesh(4, omega=OMEGA, b_region=B_REGION)


@pytest.fixture(scope="session")
def mesh8():
    return build_structured_mesh(8, omega=OMEGA, b_region=B_REGION)
