import numpy as np
import pytest

from hkgf.core import GaussianTarget, ScaledGaussianParams


def spd(rng, d, spread=1.0):
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    w = np.exp(rng.uniform(-spread, spread, d))
    return (Q * w) @ Q.T


def random_point(rng, d, kappa=None):
    k = float(np.exp(rng.uniform(-1, 1))) if kappa is None else kappa
    return ScaledGaussianParams(spd(rng, d), rng.standard_normal(d), k)


def random_target(rng, d):
    return GaussianTarget(spd(rng, d), rng.standard_normal(d), float(np.exp(rng.uniform(-1, 1))))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
