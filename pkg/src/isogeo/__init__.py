"""Monte Carlo and quadrature toolkit for random polytopes and marginal tails
of isotropic convex bodies."""

__version__ = "0.1.0"

from .bodies import Body, is_small_diameter, make_body, membership
from .errors import (
    ConfigurationError,
    InsufficientSamplesError,
    IsogeoError,
    ResolutionError,
    UsageError,
)
from .sampling import SampleBatch, StreamSpec, hit_and_run, sample_sphere, sample_uniform
from .stats import EstimateWithError

__all__ = [
    "Body",
    "ConfigurationError",
    "EstimateWithError",
    "InsufficientSamplesError",
    "IsogeoError",
    "ResolutionError",
    "SampleBatch",
    "StreamSpec",
    "UsageError",
    "hit_and_run",
    "is_small_diameter",
    "make_body",
    "membership",
    "sample_sphere",
    "sample_uniform",
]
