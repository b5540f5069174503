import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SIGMA, BETA, R = 10.0, 8.0 / 3.0, 97.0


@pytest.fixture(scope="session")
def compiled_kernel():
    """Compile (or load from cache) the SD kernel once so timed runs exclude compilation."""
    from adapt_sync.plant import Signal
    from adapt_sync.transmission import ScenarioConfig, run_scenario

    run_scenario(ScenarioConfig("warmup", message=Signal("constant", offset=0.1), horizon=0.01, step=1e-3))
    return True


def lorenz_rhs(sigma=SIGMA, beta=BETA, theta=28.0):
    def f(t, x):
        return np.array([sigma * (x[1] - x[0]), -x[1] - x[0] * x[2] + theta * x[0], -beta * x[2] + x[0] * x[1]])
    return f
