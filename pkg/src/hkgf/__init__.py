"""Reduced Hellinger-Kantorovich gradient flows on (scaled) Gaussian measures."""

from hkgf.core import (
    CotangentHK,
    DissipationSplit,
    EnergySplit,
    GaussianTarget,
    ScaledGaussianParams,
    SimpleCoords,
    TangentHK,
    entropy_differential,
    entropy_split,
    relative_entropy,
    to_simple,
    to_standard,
)
from hkgf.errors import ConfigError, DomainError, HKGFError, IntegrationError, MonotonicityError, NumericalError

__version__ = "0.1.0"
