"""Reduced Onsager operators on the scaled-Gaussian parameter space.

The operators map a cotangent ``eta = (S, mu, k)`` to a tangent
``(dSigma, dm, dkappa)``. Closed forms are used at runtime; the integral
route in :func:`full_onsager_form` evaluates the same quadratic forms through
Gaussian moments of the quadratic potential associated with ``eta`` and
serves as an independent check.
"""

from dataclasses import dataclass

import numpy as np

from hkgf._linalg import frob, sqrtm_spd, sym
from hkgf.core import CotangentHK, TangentHK, moment2, pairing, quartic_moment, trace_moment
from hkgf.errors import ConfigError

__all__ = [
    "CotangentHK",
    "TangentHK",
    "QuadCoefficients",
    "pairing",
    "check_weights",
    "apply_otto_red",
    "apply_he_red",
    "apply_hk_red",
    "apply_she_red",
    "quadratic_form",
    "xi_from_eta",
    "full_onsager_form",
]


@dataclass(frozen=True, eq=False)
class QuadCoefficients:
    """Coefficients of ``xi(x) = (x-m).A(x-m) + b.(x-m) + c``.

    The polynomial is centred at the mean of the Gaussian it was built from.
    """

    A: np.ndarray
    b: np.ndarray
    c: float

    def __call__(self, x, m):
        r = np.asarray(x, dtype=float) - m
        return np.einsum("...i,ij,...j->...", r, self.A, r) + r @ self.b + self.c


def check_weights(alpha, beta):
    alpha, beta = float(alpha), float(beta)
    if not (np.isfinite(alpha) and np.isfinite(beta)) or alpha < 0 or beta < 0:
        raise ConfigError(f"alpha and beta must be finite and non-negative, got ({alpha}, {beta})")
    if alpha == 0 and beta == 0:
        raise ConfigError("alpha and beta cannot both be zero")
    return alpha, beta


def apply_otto_red(p, eta):
    """Transport (Otto) block: ``(2/kappa)(S Sigma + Sigma S), mu/kappa, 0``."""
    SS = eta.S @ p.Sigma
    return TangentHK((2.0 / p.kappa) * (SS + SS.T), eta.mu / p.kappa, 0.0)


def apply_he_red(p, eta):
    """Hellinger block: ``(2/kappa) Sigma S Sigma, Sigma mu/kappa, kappa k``."""
    dS = (2.0 / p.kappa) * sym(p.Sigma @ eta.S @ p.Sigma)
    return TangentHK(dS, p.Sigma @ eta.mu / p.kappa, p.kappa * eta.k)


def apply_hk_red(alpha, beta, p, eta):
    """``alpha K_Otto + beta K_He`` applied to ``eta``."""
    alpha, beta = check_weights(alpha, beta)
    return apply_otto_red(p, eta).scaled(alpha) + apply_he_red(p, eta).scaled(beta)


def apply_she_red(alpha, beta, pn, eta):
    """Reduced operator of the spherical geometry on normalized Gaussians.

    The mass block is dropped; ``pn.kappa`` is treated as 1.
    """
    alpha, beta = check_weights(alpha, beta)
    Sigma = pn.Sigma
    SS = eta.S @ Sigma
    dS = alpha * 2.0 * (SS + SS.T) + beta * 2.0 * sym(Sigma @ eta.S @ Sigma)
    dm = alpha * eta.mu + beta * (Sigma @ eta.mu)
    return TangentHK(dS, dm, 0.0)


def _otto_form(p, eta):
    return (4.0 * frob(eta.S @ eta.S, p.Sigma) + float(eta.mu @ eta.mu)) / p.kappa


def _he_form(p, eta, with_mass=True):
    R = sqrtm_spd(p.Sigma)
    M = R @ eta.S @ R
    v = R @ eta.mu
    val = (2.0 * frob(M) + float(v @ v)) / p.kappa
    if with_mass:
        val += p.kappa * eta.k**2
    return val


def quadratic_form(alpha, beta, p, eta, normalized=False):
    """``<eta, K eta>`` from the closed-form blocks.

    With ``normalized=True`` the mass block is ignored, which gives the
    form of :func:`apply_she_red` at ``kappa = 1``.
    """
    alpha, beta = check_weights(alpha, beta)
    return alpha * _otto_form(p, eta) + beta * _he_form(p, eta, with_mass=not normalized)


def xi_from_eta(p, eta):
    """Quadratic polynomial whose gradient/values generate the tangent of ``eta``."""
    A = eta.S / p.kappa
    return QuadCoefficients(A, eta.mu / p.kappa, eta.k - frob(eta.S, p.Sigma) / p.kappa)


def full_onsager_form(p, eta):
    """Evaluate ``int kappa G |grad xi|^2`` and ``int kappa G xi^2`` via moments.

    Returns
    -------
    otto_part, hellinger_part : float
    """
    xi = xi_from_eta(p, eta)
    R = sqrtm_spd(p.Sigma)
    # grad xi at m + R z is 2 A R z + b; the two pieces are uncorrelated
    G = 2.0 * xi.A @ R
    otto = trace_moment(G.T @ G) + moment2(xi.b, xi.b)
    # xi at m + R z is z.M z + (R b).z + c; odd moments vanish
    M = sym(R @ xi.A @ R)
    Rb = R @ xi.b
    he = quartic_moment(M, M) + 2.0 * xi.c * trace_moment(M) + xi.c**2 + moment2(Rb, Rb)
    return p.kappa * otto, p.kappa * he
