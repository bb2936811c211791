import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sipembed.graph import Graph

settings.register_profile(
    "default", deadline=None, max_examples=30, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("thorough", deadline=None, max_examples=300)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def graph_from_dense(A: np.ndarray) -> Graph:
    return Graph.from_scipy(A)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
