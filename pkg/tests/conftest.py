import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("marlvm", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("marlvm")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def unit_rows(rng, K, D):
    A = rng.standard_normal((K, D))
    return A / np.linalg.norm(A, axis=1, keepdims=True)
