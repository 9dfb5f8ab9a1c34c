import numpy as np
import pytest

from infocoupling import Channel, ProbDist


def random_dist(rng, n, floor=0.05):
    """Strictly positive random distribution, bounded away from zero."""
    raw = rng.gamma(1.0, 1.0, n) + floor
    return ProbDist(raw / raw.sum())


def random_channel(rng, ny, nx, floor=0.05):
    """Column-stochastic random channel with entries bounded away from zero."""
    cols = rng.gamma(1.0, 1.0, (ny, nx)) + floor
    return Channel(cols / cols.sum(axis=0, keepdims=True))


def random_direction(rng, px, margin=0.5):
    """Zero-sum direction J keeping px + eps*J positive for eps <= `margin`
    times the smallest mass over the largest entry."""
    j = rng.standard_normal(px.alphabet_size)
    j -= j.mean()
    worst = float(np.max(np.abs(j)))
    scale = margin * float(np.min(px.probs)) / worst
    return j * scale


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def bsc():
    """Binary symmetric channel, crossover 0.1, uniform input."""
    px = ProbDist(np.array([0.5, 0.5]))
    ch = Channel(np.array([[0.9, 0.1], [0.1, 0.9]]))
    return px, ch
