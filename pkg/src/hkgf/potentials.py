"""Target potentials ``V`` and estimators of Gaussian expectations of V, grad V, hess V.

A potential target is ``pi = mass * exp(-V) / Z``. When ``log Z`` is known
the relative entropy of a Gaussian with respect to ``pi`` can be estimated,
otherwise only its V-dependent part is available.
"""

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.special import expit

from hkgf._linalg import sqrtm_spd, sym
from hkgf.core import LOG_2PI, GaussianTarget
from hkgf.errors import ConfigError, DomainError, NumericalError

_CHUNK = 20_000


class Moments(NamedTuple):
    """Estimates of E[V], E[grad V] and E[hess V] under a Gaussian."""

    value: float
    grad: np.ndarray
    hess: np.ndarray


@dataclass(frozen=True, eq=False)
class PotentialTarget:
    """Pointwise oracles for ``V``; all three accept an ``(n, d)`` batch.

    Attributes
    ----------
    kind : {"gaussian_quadratic", "logistic_regression", "custom"}
    value, grad, hess : callable
        Map ``(n, d)`` points to ``(n,)``, ``(n, d)`` and ``(n, d, d)`` arrays.
    dim : int
    lambda_convexity : float, optional
        ``V - lambda |x|^2 / 2`` is convex when given.
    log_normalizer : float, optional
        ``log int exp(-V)``; enables entropy estimates and the mass equation.
    mass : float
        Total mass of the target.
    exact : callable, optional
        ``exact(Sigma, m) -> Moments`` for closed-form Gaussian expectations.
    """

    kind: str
    value: Callable
    grad: Callable
    hess: Callable
    dim: int
    lambda_convexity: Optional[float] = None
    log_normalizer: Optional[float] = None
    mass: float = 1.0
    exact: Optional[Callable] = None
    gaussian: Optional[GaussianTarget] = None

    @property
    def normalizer_known(self):
        return self.log_normalizer is not None


@dataclass(frozen=True)
class MomentEstimator:
    """How Gaussian expectations are computed.

    ``mode`` is one of ``exact_gaussian``, ``monte_carlo`` (``n_mc`` samples)
    or ``gauss_hermite`` (``nodes_per_dim`` nodes per axis, d <= 4).
    """

    mode: str = "monte_carlo"
    n_mc: int = 1000
    nodes_per_dim: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("exact_gaussian", "monte_carlo", "gauss_hermite"):
            raise ConfigError(f"unknown estimator mode {self.mode!r}")
        if self.mode == "monte_carlo" and self.n_mc < 1:
            raise ConfigError("n_mc must be at least 1")
        if self.mode == "gauss_hermite" and self.nodes_per_dim < 1:
            raise ConfigError("nodes_per_dim must be at least 1")


def gaussian_potential(target):
    """``V(x) = (x-n).Gamma^{-1}(x-n)/2`` with exact Gaussian moments."""
    Gi = np.array(target.Gamma_inv)
    n = np.array(target.n)
    d = target.dim

    def value(x):
        r = np.atleast_2d(x) - n
        return 0.5 * np.einsum("ki,ij,kj->k", r, Gi, r)

    def grad(x):
        return (np.atleast_2d(x) - n) @ Gi

    def hess(x):
        k = np.atleast_2d(x).shape[0]
        return np.broadcast_to(Gi, (k, d, d)).copy()

    def exact(Sigma, m):
        r = m - n
        g = Gi @ r
        return Moments(0.5 * (np.sum(Gi * Sigma) + float(r @ g)), g, Gi.copy())

    logZ = 0.5 * (d * LOG_2PI + target.logdet)
    return PotentialTarget(
        "gaussian_quadratic", value, grad, hess, d,
        lambda_convexity=float(np.linalg.eigvalsh(Gi)[0]),
        log_normalizer=logZ, mass=target.varkappa, exact=exact, gaussian=target,
    )


def _check_finite(x, V, g, H):
    bad = ~(np.isfinite(V) & np.isfinite(g).all(axis=1) & np.isfinite(H).all(axis=(1, 2)))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise NumericalError(f"potential oracle returned a non-finite value at sample {x[i].tolist()}")


def _weighted(pot, x, w):
    """Weighted sums of V, grad V, hess V over points ``x`` (processed in chunks)."""
    d = x.shape[1]
    EV, Eg, EH = 0.0, np.zeros(d), np.zeros((d, d))
    for s in range(0, x.shape[0], _CHUNK):
        xs, ws = x[s:s + _CHUNK], w[s:s + _CHUNK]
        V, g, H = pot.value(xs), pot.grad(xs), pot.hess(xs)
        _check_finite(xs, V, g, H)
        EV += float(ws @ V)
        Eg += ws @ g
        EH += np.einsum("k,kij->ij", ws, H)
    return Moments(EV, Eg, sym(EH))


def gaussian_samples(Sigma, m, n, rng):
    """Draw ``n`` points from G(Sigma, m) via the symmetric square root."""
    z = rng.standard_normal((n, m.shape[0]))
    return m + z @ sqrtm_spd(Sigma)


def hermite_nodes(d, k):
    """Tensorized probabilists' Gauss-Hermite nodes and normalized weights."""
    t, w = hermegauss(k)
    w = w / np.sqrt(2.0 * np.pi)
    grids = np.meshgrid(*([t] * d), indexing="ij")
    z = np.stack([g.ravel() for g in grids], axis=1)
    wz = np.ones(z.shape[0])
    for g in np.meshgrid(*([w] * d), indexing="ij"):
        wz = wz * g.ravel()
    return z, wz


def estimate_moments(est, Sigma, m, pot, rng=None):
    """Estimate E[V], E[grad V], E[hess V] under G(Sigma, m).

    Parameters
    ----------
    est : MomentEstimator
    Sigma, m : array_like
        Covariance and mean of the Gaussian.
    pot : PotentialTarget
    rng : numpy.random.Generator, optional
        Used by the Monte Carlo mode; defaults to a generator seeded with
        ``est.seed``.

    Returns
    -------
    Moments
    """
    Sigma = np.asarray(Sigma, dtype=float)
    m = np.asarray(m, dtype=float)
    d = m.shape[0]
    if est.mode == "exact_gaussian":
        if pot.exact is None:
            raise ConfigError(f"exact moments are not available for a {pot.kind} potential")
        return pot.exact(Sigma, m)
    if est.mode == "gauss_hermite":
        if d > 4:
            raise ConfigError(f"Gauss-Hermite quadrature is limited to d <= 4, got d = {d}")
        z, w = hermite_nodes(d, est.nodes_per_dim)
        return _weighted(pot, m + z @ sqrtm_spd(Sigma), w)
    if rng is None:
        rng = np.random.default_rng(est.seed)
    x = gaussian_samples(Sigma, m, est.n_mc, rng)
    return _weighted(pot, x, np.full(est.n_mc, 1.0 / est.n_mc))


def gaussian_entropy(Sigma):
    """Differential entropy of G(Sigma, .)."""
    d = Sigma.shape[0]
    return 0.5 * (d * (1.0 + LOG_2PI) + np.linalg.slogdet(Sigma)[1])


def free_energy(Sigma, EV, pot):
    """``E[V] - entropy``, plus ``log Z`` when known (then it is the KL divergence)."""
    F = EV - gaussian_entropy(Sigma)
    if pot.normalizer_known:
        F += pot.log_normalizer
    return F


# -- logistic regression ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LogisticData:
    """Binary classification data for the logistic potential."""

    features: np.ndarray
    labels: np.ndarray
    reg_lambda: float = 1.0
    include_intercept: bool = False

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.features, dtype=float))
        y = np.asarray(self.labels, dtype=float).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise DomainError(f"features have {X.shape[0]} rows but there are {y.shape[0]} labels")
        if X.shape[0] < 1:
            raise DomainError("at least one sample is required")
        if not np.all((y == 0) | (y == 1)):
            raise DomainError("labels must be 0 or 1")
        if not self.reg_lambda > 0:
            raise DomainError(f"reg_lambda must be positive, got {self.reg_lambda}")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def design(self):
        X = self.features
        if self.include_intercept:
            X = np.hstack([X, np.ones((X.shape[0], 1))])
        return X


def load_logistic_csv(path, reg_lambda=1.0, include_intercept=False):
    """Read a CSV with header ``x_1, ..., x_d, y``."""
    with open(path) as fh:
        header = [h.strip() for h in fh.readline().split(",")]
    if not header or header[-1] != "y" or any(not h.startswith("x_") for h in header[:-1]):
        raise ConfigError(f"{path}: expected header x_1,...,x_d,y, got {','.join(header)}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return LogisticData(data[:, :-1], data[:, -1], reg_lambda, include_intercept)


def logistic_potential(data, prior_precision=0.0):
    """Tempered negative log-likelihood of a Bernoulli model.

    ``V(theta) = sum_i [log(1 + e^{s_i}) - y_i s_i] / (N lambda)`` with
    ``s_i = theta.x_i`` (the intercept is the last coordinate when enabled),
    plus ``prior_precision |theta|^2 / 2``.
    """
    X = data.design
    y = data.labels
    N, d = X.shape
    scale = 1.0 / (N * data.reg_lambda)
    prior = float(prior_precision)
    XX = np.einsum("ni,nj->nij", X, X).reshape(N, d * d)

    def value(theta):
        th = np.atleast_2d(theta)
        s = th @ X.T
        nll = np.sum(np.maximum(s, 0.0) + np.log1p(np.exp(-np.abs(s))) - y * s, axis=1)
        return scale * nll + 0.5 * prior * np.sum(th * th, axis=1)

    def grad(theta):
        th = np.atleast_2d(theta)
        r = expit(th @ X.T) - y
        return scale * (r @ X) + prior * th

    def hess(theta):
        th = np.atleast_2d(theta)
        sg = expit(th @ X.T)
        H = scale * ((sg * (1.0 - sg)) @ XX).reshape(-1, d, d)
        return H + prior * np.eye(d)

    return PotentialTarget(
        "logistic_regression", value, grad, hess, d,
        lambda_convexity=prior if prior > 0 else None,
    )

