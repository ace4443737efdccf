"""Scaled Gaussian parameters, coordinate changes and the relative entropy.

A scaled Gaussian is ``kappa * G(Sigma, m)`` with ``G`` the normalized
Gaussian density. The same measure can be written in "simple" coordinates
as ``exp(c + b.x - x.A x / 2)``; :func:`to_standard` and :func:`to_simple`
convert between the two.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from hkgf._linalg import check_symmetric, cholesky_spd, frob, inv_spd, logdet_spd, sym
from hkgf.errors import DomainError

LOG_2PI = np.log(2.0 * np.pi)


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _vector(v, d, name):
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape != (d,):
        raise DomainError(f"{name} must have length {d}, got {v.shape[0]}")
    return v


def _positive(x, name):
    x = float(x)
    if not np.isfinite(x) or x <= 0.0:
        raise DomainError(f"{name} must be positive, got {x}")
    return x


def _spd(M, name):
    M = check_symmetric(np.atleast_2d(np.asarray(M, dtype=float)), name)
    cholesky_spd(M, name)
    return M


@dataclass(frozen=True, eq=False)
class ScaledGaussianParams:
    """The point ``(Sigma, m, kappa)``; ``kappa = 1`` is the normalized case."""

    Sigma: np.ndarray
    m: np.ndarray
    kappa: float = 1.0

    def __post_init__(self):
        S = _spd(self.Sigma, "Sigma")
        object.__setattr__(self, "Sigma", _frozen(S))
        object.__setattr__(self, "m", _frozen(_vector(self.m, S.shape[0], "m")))
        object.__setattr__(self, "kappa", _positive(self.kappa, "kappa"))

    @property
    def dim(self):
        return self.m.shape[0]

    @cached_property
    def precision(self):
        return inv_spd(self.Sigma, "Sigma")

    @cached_property
    def logdet(self):
        return logdet_spd(self.Sigma, "Sigma")

    def replace(self, **changes):
        fields = {"Sigma": self.Sigma, "m": self.m, "kappa": self.kappa}
        fields.update(changes)
        return ScaledGaussianParams(**fields)

    def to_json(self):
        return {"sigma": self.Sigma.tolist(), "m": self.m.tolist(), "kappa": self.kappa}

    @classmethod
    def from_json(cls, obj):
        return cls(np.asarray(obj["sigma"], dtype=float), obj["m"], obj.get("kappa", 1.0))


@dataclass(frozen=True, eq=False)
class SimpleCoords:
    """The point ``(A, b, c)`` of the exponential-quadratic parametrization."""

    A: np.ndarray
    b: np.ndarray
    c: float

    def __post_init__(self):
        A = _spd(self.A, "A")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "b", _frozen(_vector(self.b, A.shape[0], "b")))
        object.__setattr__(self, "c", float(self.c))

    @property
    def dim(self):
        return self.b.shape[0]

    def to_json(self):
        return {"A": self.A.tolist(), "b": self.b.tolist(), "c": self.c}

    @classmethod
    def from_json(cls, obj):
        return cls(np.asarray(obj["A"], dtype=float), obj["b"], obj["c"])


@dataclass(frozen=True, eq=False)
class GaussianTarget:
    """Target measure ``varkappa * G(Gamma, n)``."""

    Gamma: np.ndarray
    n: np.ndarray
    varkappa: float = 1.0

    def __post_init__(self):
        G = _spd(self.Gamma, "Gamma")
        object.__setattr__(self, "Gamma", _frozen(G))
        object.__setattr__(self, "n", _frozen(_vector(self.n, G.shape[0], "n")))
        object.__setattr__(self, "varkappa", _positive(self.varkappa, "varkappa"))

    @property
    def dim(self):
        return self.n.shape[0]

    @cached_property
    def Gamma_inv(self):
        return inv_spd(self.Gamma, "Gamma")

    @cached_property
    def logdet(self):
        return logdet_spd(self.Gamma, "Gamma")

    def as_params(self):
        return ScaledGaussianParams(self.Gamma, self.n, self.varkappa)

    def to_simple(self):
        return to_simple(self.as_params())

    def to_json(self):
        return {"gamma": self.Gamma.tolist(), "n": self.n.tolist(), "varkappa": self.varkappa}

    @classmethod
    def from_json(cls, obj):
        return cls(np.asarray(obj["gamma"], dtype=float), obj["n"], obj.get("varkappa", 1.0))


@dataclass(frozen=True)
class EnergySplit:
    """Covariance part, mean part and mass term of the relative entropy.

    ``h_cov`` and ``h_mean`` refer to the normalized shape; the total energy
    of a scaled Gaussian is ``kappa * (h_cov + h_mean) + mass_term``.
    """

    h_cov: float
    h_mean: float
    mass_term: float = 0.0
    kappa: float = 1.0

    @property
    def shape(self):
        return self.h_cov + self.h_mean

    @property
    def total(self):
        return self.kappa * (self.h_cov + self.h_mean) + self.mass_term


@dataclass(frozen=True)
class DissipationSplit:
    """Covariance, mean and (optional) mass parts of the dissipation."""

    d_cov: float
    d_mean: float
    d_mass: float = 0.0

    @property
    def total(self):
        return self.d_cov + self.d_mean + self.d_mass


@dataclass(frozen=True, eq=False)
class CotangentHK:
    """Cotangent vector ``(S, mu, k)``; ``k`` is ignored in the normalized case."""

    S: np.ndarray
    mu: np.ndarray
    k: float = 0.0

    def __post_init__(self):
        S = check_symmetric(np.atleast_2d(np.asarray(self.S, dtype=float)), "S")
        object.__setattr__(self, "S", _frozen(S))
        object.__setattr__(self, "mu", _frozen(_vector(self.mu, S.shape[0], "mu")))
        object.__setattr__(self, "k", float(self.k))

    @classmethod
    def zeros(cls, d):
        return cls(np.zeros((d, d)), np.zeros(d), 0.0)

    def scaled(self, a):
        return CotangentHK(a * self.S, a * self.mu, a * self.k)

    def norm2(self):
        return frob(self.S) + float(self.mu @ self.mu) + self.k**2

    def to_json(self):
        return {"S": self.S.tolist(), "mu": self.mu.tolist(), "k": self.k}

    @classmethod
    def from_json(cls, obj):
        return cls(np.asarray(obj["S"], dtype=float), obj["mu"], obj.get("k", 0.0))


@dataclass(frozen=True, eq=False)
class TangentHK:
    """Tangent vector ``(dSigma, dm, dkappa)``."""

    dSigma: np.ndarray
    dm: np.ndarray
    dkappa: float = 0.0

    def __post_init__(self):
        dS = sym(np.atleast_2d(np.asarray(self.dSigma, dtype=float)))
        object.__setattr__(self, "dSigma", _frozen(dS))
        object.__setattr__(self, "dm", _frozen(_vector(self.dm, dS.shape[0], "dm")))
        object.__setattr__(self, "dkappa", float(self.dkappa))

    def __add__(self, other):
        return TangentHK(self.dSigma + other.dSigma, self.dm + other.dm, self.dkappa + other.dkappa)

    def __neg__(self):
        return TangentHK(-self.dSigma, -self.dm, -self.dkappa)

    def scaled(self, a):
        return TangentHK(a * self.dSigma, a * self.dm, a * self.dkappa)

    def to_json(self):
        return {"dSigma": self.dSigma.tolist(), "dm": self.dm.tolist(), "dkappa": self.dkappa}


def pairing(eta, v):
    """Duality pairing ``S:dSigma + mu.dm + k*dkappa``."""
    return frob(eta.S, v.dSigma) + float(eta.mu @ v.dm) + eta.k * v.dkappa


# -- coordinate changes -------------------------------------------------------


def to_standard(q):
    """Map simple coordinates ``(A, b, c)`` to ``(Sigma, m, kappa)``."""
    Sigma = inv_spd(q.A, "A")
    m = Sigma @ q.b
    d = q.dim
    log_kappa = 0.5 * d * LOG_2PI - 0.5 * logdet_spd(q.A, "A") + q.c + 0.5 * float(q.b @ m)
    return ScaledGaussianParams(Sigma, m, np.exp(log_kappa))


def to_simple(p):
    """Inverse of :func:`to_standard`."""
    A = p.precision
    b = A @ p.m
    c = np.log(p.kappa) - 0.5 * p.dim * LOG_2PI - 0.5 * p.logdet - 0.5 * float(p.m @ b)
    return SimpleCoords(A, b, c)


def density_at(p, x):
    """Evaluate ``kappa * G(Sigma, m)`` at one point or a batch of points."""
    x = np.asarray(x, dtype=float)
    r = x - p.m
    quad = np.einsum("...i,ij,...j->...", r, p.precision, r)
    log_norm = 0.5 * (p.dim * LOG_2PI + p.logdet)
    return p.kappa * np.exp(-0.5 * quad - log_norm)


# -- entropy --------------------------------------------------------------------


def lambda_b(r):
    """Boltzmann function ``r log r - r + 1`` with the limit value 1 at 0."""
    r = float(r)
    if r == 0.0:
        return 1.0
    return r * np.log(r) - r + 1.0


def phi(b):
    """``phi(b) = b - 1 - log b``; accurate near b = 1."""
    b = np.asarray(b, dtype=float)
    e = b - 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        near = e - np.log1p(np.where(np.abs(e) < 0.5, e, 0.0))
        far = e - np.log(b)
    return np.where(np.abs(e) < 0.5, near, far)


def _h_cov(Sigma, target):
    d = target.dim
    return 0.5 * (np.sum(target.Gamma_inv * Sigma) - d) - 0.5 * (logdet_spd(Sigma, "Sigma") - target.logdet)


def _h_mean(m, target):
    r = m - target.n
    return 0.5 * float(r @ target.Gamma_inv @ r)


def gaussian_kl(Sigma, m, target):
    """Relative entropy between the normalized Gaussians G(Sigma, m) and G(Gamma, n)."""
    return _h_cov(Sigma, target) + _h_mean(m, target)


def entropy_split(Sigma, m, target, kappa=None):
    """Split the normalized relative entropy into covariance and mean parts.

    If ``kappa`` is given, the mass term ``varkappa * lambda_B(kappa/varkappa)``
    is filled in as well.
    """
    Sigma = np.asarray(Sigma, dtype=float)
    m = np.asarray(m, dtype=float)
    h_cov = max(_h_cov(Sigma, target), 0.0)
    h_mean = _h_mean(m, target)
    if kappa is None:
        return EnergySplit(h_cov, h_mean)
    mass = target.varkappa * lambda_b(kappa / target.varkappa)
    return EnergySplit(h_cov, h_mean, mass, float(kappa))


def relative_entropy(p, target):
    """Relative Boltzmann entropy of ``kappa G(Sigma, m)`` w.r.t. the target."""
    H = gaussian_kl(p.Sigma, p.m, target)
    return p.kappa * H + target.varkappa * lambda_b(p.kappa / target.varkappa)


def entropy_differential(p, target):
    """Differential of :func:`relative_entropy` as a cotangent vector."""
    S = 0.5 * p.kappa * (target.Gamma_inv - p.precision)
    mu = p.kappa * (target.Gamma_inv @ (p.m - target.n))
    k = gaussian_kl(p.Sigma, p.m, target) + np.log(p.kappa / target.varkappa)
    return CotangentHK(sym(S), mu, k)


# -- standard-normal moments -----------------------------------------------------


def moment2(a, b):
    """E[(a.z)(b.z)] for z standard normal."""
    return float(np.dot(a, b))


def trace_moment(A):
    """E[z.A z] for z standard normal."""
    return float(np.trace(A))


def quartic_moment(A, B):
    """E[(z.A z)(z.B z)] for z standard normal and symmetric A, B."""
    return 2.0 * frob(A, B) + float(np.trace(A) * np.trace(B))
