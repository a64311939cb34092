import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def interior_points(rng, n, K, shrink=0.9):
    """Dirichlet points pulled toward the centre so finite differences stay inside."""
    P = rng.dirichlet(np.ones(K), size=n)
    return shrink * P + (1.0 - shrink) / K
