import math

import pytest
from hypothesis import HealthCheck, settings

from torus_canards.system import CosineOval, make_geometry, validate_genericity

settings.register_profile(
    "default",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.function_scoped_fixture, HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def raw_sys():
    return CosineOval()


@pytest.fixture(scope="session")
def sys_(raw_sys):
    """The default system after orientation normalisation."""
    return validate_genericity(raw_sys).normalized


@pytest.fixture(scope="session")
def geom(sys_):
    return make_geometry(sys_)


def closed_form_field(x, y, eps, k=1.5, g_amp=0.0, f1_amp=0.0):
    """Raw family written out by hand, independent of the package kernels."""
    f = math.cos(x) + math.cos(y) - k + eps * f1_amp * math.sin(x + y)
    g = 1.0 + g_amp * math.cos(x - y)
    return f, g
