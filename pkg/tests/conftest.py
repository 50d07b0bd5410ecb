import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dynfg.elim import kernels

settings.register_profile("dynfg", derandomize=True, deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("dynfg")


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    return kernels.get_backend(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def random_pose(rng):
    from dynfg.spatial import Pose, so3_exp
    return Pose(so3_exp(rng.normal(size=3) * 2.0), rng.normal(size=3))
