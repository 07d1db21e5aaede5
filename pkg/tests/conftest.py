import numpy as np
import pytest

from gibbscomp.core import StateSpace
from gibbscomp.oracle import normalize, random_pairwise_model


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


def random_measure(rng, n_sites=4, k=2, scale=0.5, edges=None):
    space = StateSpace((k,) * n_sites)
    if edges is None:
        edges = [(i, i + 1) for i in range(n_sites - 1)] + ([(0, n_sites - 1)] if n_sites > 2 else [])
    return normalize(random_pairwise_model(space, edges, rng, scale))
