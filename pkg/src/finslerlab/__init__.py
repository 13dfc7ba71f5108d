"""Numerical laboratory for Finsler metric measure geometry.

Core building blocks: anisotropic metric families with their duals and
Legendre maps, grid-based forward distance fields, Minkowski content,
volume entropy and Cheeger-type constants, weighted Ricci certification,
a Rayleigh-quotient eigensolver for the nonlinear Laplacian, discrete
optimal transport, and a scenario harness with a CLI.
"""

from .errors import FinslerLabError
from .metrics import (
    EuclideanMetric,
    GenericMetric,
    MetricField,
    RandersMetric,
    ReversedMetric,
    WeightedRiemannianMetric,
    dual_fundamental,
    fundamental_tensor,
    make_metric,
    reversibility_constant,
    uniformity_constants,
)

__version__ = "0.1.0"

__all__ = [
    "EuclideanMetric",
    "FinslerLabError",
    "GenericMetric",
    "MetricField",
    "RandersMetric",
    "ReversedMetric",
    "WeightedRiemannianMetric",
    "dual_fundamental",
    "fundamental_tensor",
    "make_metric",
    "reversibility_constant",
    "uniformity_constants",
    "__version__",
]
