import numpy as np
import pytest

from vakonomic.integrate import IntegratorConfig, integrate
from vakonomic.models import MODELS


@pytest.fixture(scope="session")
def sphere_long_runs():
    """Sphere, unit parameters, Omega = 1, T = 5 at steps 1e-3 and 5e-4."""
    entry = MODELS["sphere"]
    sys = entry.build({})
    init = entry.initial(sys)
    runs = {}
    for h in (1e-3, 5e-4):
        runs[h] = integrate(sys, init, IntegratorConfig((0.0, 5.0), "rk4", h))
    return sys, runs


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
