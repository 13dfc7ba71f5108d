import numpy as np
import pytest

from finslerlab.metrics import (
    EuclideanMetric,
    GenericMetric,
    RandersMetric,
    WeightedRiemannianMetric,
)


@pytest.fixture
def euclid2():
    return EuclideanMetric(2)


@pytest.fixture
def randers05():
    return RandersMetric([0.5, 0.0])


@pytest.fixture
def half_plane():
    """Constant-curvature -1 metric on the upper half-plane chart."""
    return WeightedRiemannianMetric.from_expressions(
        [["1/x2^2", "0"], ["0", "1/x2^2"]]
    )


@pytest.fixture
def quartic_norm():
    """Smooth strongly convex non-quadratic norm, x-independent."""
    return GenericMetric(
        2, "sqrt(y1^2 + y2^2 + 0.3*(y1^4 + y2^4)/(y1^2 + y2^2))"
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_points(rng, count, dim, lo=-2.0, hi=2.0):
    return rng.uniform(lo, hi, size=(count, dim))


def random_directions(rng, count, dim):
    d = rng.standard_normal((count, dim))
    return d / np.linalg.norm(d, axis=-1, keepdims=True)
