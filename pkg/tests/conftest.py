import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def make_spd(rng, dim):
    g = rng.standard_normal((dim, dim))
    return g @ g.T + np.eye(dim)
