import numpy as np
import pytest

from qsanneal.energy_model import build_model
from qsanneal.markov import metropolis_builder


def random_symmetric_proposal(d, rng, cycles=3):
    """Symmetric, hollow, doubly stochastic: average of symmetrized random d-cycles."""
    q = np.zeros((d, d))
    for _ in range(cycles):
        order = rng.permutation(d)
        p = np.zeros((d, d))
        p[np.roll(order, -1), order] = 1.0
        q += 0.5 * (p + p.T)
    return q / cycles


def complete(d):
    return (np.ones((d, d)) - np.eye(d)) / (d - 1)


def random_instance(rng, d_min=2, d_max=6, integer=False, laziness=0.5):
    d = int(rng.integers(d_min, d_max + 1))
    if integer:
        e = np.r_[0.0, rng.integers(1, 4, d - 1)]
        rng.shuffle(e)
    else:
        e = rng.uniform(-1.0, 3.0, d)
    model = build_model(e)
    q = complete(d) if d < 3 else random_symmetric_proposal(d, rng)
    return model, q, metropolis_builder(model, q, laziness)


@pytest.fixture
def two_level():
    model = build_model([0.0, 1.0])
    swap = np.array([[0.0, 1.0], [1.0, 0.0]])
    return model, swap, metropolis_builder(model, swap)
