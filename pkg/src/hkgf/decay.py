"""Dissipation split, Polyak-Lojasiewicz constants and decay-rate verification."""

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from hkgf._linalg import sqrtm_spd
from hkgf.core import DissipationSplit, phi
from hkgf.errors import DomainError
from hkgf.flow import dissipation_arrays, normalized_covariance
from hkgf.onsager import check_weights
from hkgf.potentials import estimate_moments

__all__ = [
    "DissipationSplit",
    "DecayRates",
    "DecayReport",
    "dissipation_split",
    "zeta",
    "zeta_over_phi",
    "H_aux",
    "h_inf",
    "h_lower_bound",
    "alpha_gamma",
    "pl_constants",
    "refined_rates",
    "fit_rate",
    "verify_decay",
    "sublevel_minimizer_check",
    "sublevel_interval",
    "b_min",
    "MinimizerResiduals",
]

_TINY = 1e2 * np.finfo(float).eps


def dissipation_split(alpha, beta, pn, target):
    """Covariance and mean parts of the dissipation of the normalized flow."""
    alpha, beta = check_weights(alpha, beta)
    d_cov, d_mean = dissipation_arrays(alpha, beta, pn.Sigma, pn.m, target.Gamma_inv, target.n)
    return DissipationSplit(float(d_cov), float(d_mean))


# -- auxiliary functions ---------------------------------------------------------------


def zeta(y):
    """``(sqrt(y) - 1/sqrt(y))^2 = (y - 1)^2 / y``."""
    y = np.asarray(y, dtype=float)
    return (y - 1.0) ** 2 / y


def zeta_over_phi(y):
    """``zeta(y) / phi(y)`` with its limit 2 at ``y = 1`` (series near 1)."""
    y = np.asarray(y, dtype=float)
    e = y - 1.0
    near = np.abs(e) < 1e-3
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = zeta(y) / phi(y)
    es = e[near] if e.ndim else (e if near else None)
    if np.any(near):
        series = (1.0 / (1.0 + es)) / (0.5 - es / 3.0 + es**2 / 4.0 - es**3 / 5.0 + es**4 / 6.0)
        if out.ndim:
            out[near] = series
        else:
            out = np.asarray(series)
    return out


def H_aux(delta, beta, y):
    """``H(delta, beta; y) = (delta + beta y) zeta(y) / phi(y)``; equals ``2 (delta + beta)`` at 1."""
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise DomainError("H_aux needs y > 0")
    out = (delta + beta * y) * zeta_over_phi(y)
    return float(out) if out.ndim == 0 else out


def _g_limit(y):
    """``zeta/phi`` including the limits at 0 (infinity) and infinity (1)."""
    if y == 0:
        return np.inf
    if np.isinf(y):
        return 1.0
    return float(zeta_over_phi(y))


def _yg_limit(y):
    """``y zeta/phi`` including the limits at 0 (0) and infinity (infinity)."""
    if y == 0:
        return 0.0
    if np.isinf(y):
        return np.inf
    return float(y * zeta_over_phi(y))


def _check_interval(J):
    lo, hi = float(J[0]), float(J[1])
    if not (0.0 <= lo < hi):
        raise DomainError(f"interval must satisfy 0 <= lower < upper, got ({lo}, {hi})")
    return lo, hi


def h_lower_bound(delta, beta, J):
    """``delta h(1,0;J) + beta h(0,1;J)`` from the monotone pieces of H.

    ``zeta/phi`` decreases and ``y zeta/phi`` increases, so the two infima
    sit at the upper and lower endpoint respectively.
    """
    lo, hi = _check_interval(J)
    out = 0.0
    if delta:
        out += delta * _g_limit(hi)
    if beta:
        out += beta * _yg_limit(lo)
    return out


def h_inf(delta, beta, J):
    """``inf_{y in J} H(delta, beta; y)``.

    Equal to :func:`h_lower_bound` when ``delta beta = 0``; otherwise the
    infimum is interior and is located by a log-grid search refined with a
    bounded scalar minimization.
    """
    lo, hi = _check_interval(J)
    if delta == 0 or beta == 0:
        return h_lower_bound(delta, beta, J)
    a = np.log(max(lo, 1e-300))
    b = np.log(min(hi, 1e150))
    grid = np.linspace(a, b, 4001)
    vals = H_aux(delta, beta, np.exp(grid))
    i = int(np.argmin(vals))
    best = float(vals[i])
    left, right = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    if right > left:
        res = minimize_scalar(lambda u: H_aux(delta, beta, np.exp(u)), bounds=(left, right),
                              method="bounded", options={"xatol": 1e-12})
        best = min(best, float(res.fun))
    return best


# -- constants and rates -----------------------------------------------------------------------


def alpha_gamma(alpha, target):
    """``alpha nu_min(Gamma^{-1})``."""
    return float(alpha * np.linalg.eigvalsh(target.Gamma_inv)[0])


def sublevel_interval(E):
    """Range of the eigenvalues of ``Gamma^{-1/2} Sigma Gamma^{-1/2}`` on ``{E_1 <= E}``."""
    return np.exp(-(1.0 + 2.0 * E)), 1.0 + np.log(4.0) + 4.0 * E


def pl_constants(alpha, beta, target, E=None):
    """PL constants ``(c_cov, c_mean)`` with ``D_cov >= c_cov H_cov`` and ``D_m >= c_mean H_m``.

    Without ``E`` the constants are global; with ``E`` they hold on the
    sublevel set ``{E_1 <= E}``.
    """
    alpha, beta = check_weights(alpha, beta)
    aG = alpha_gamma(alpha, target)
    if E is None:
        if aG == 0:
            c_cov = 0.0
        elif beta == 0:
            c_cov = 2.0 * aG
        else:
            c_cov = h_inf(2.0 * aG, beta, (0.0, np.inf))
        return c_cov, 2.0 * aG
    lo, hi = sublevel_interval(E)
    c_cov = 2.0 * aG * h_lower_bound(1.0, 0.0, (lo, hi)) + beta * h_lower_bound(0.0, 1.0, (lo, hi))
    return c_cov, 2.0 * aG + 2.0 * beta * lo


@dataclass(frozen=True)
class DecayRates:
    """Theoretical rates and prefactors of the decay estimates.

    ``prefactor_mean`` uses the exponent ``2 beta / nu_cov``: the mean
    estimate integrates ``beta (1 - b_min)``, which is controlled through the
    eigenvalue envelope with rate ``nu_cov``.
    """

    nu_cov: float
    nu_mean: float
    prefactor_cov: float
    prefactor_mean: float
    c_pl_cov: float
    c_pl_mean: float
    gamma_loglambda: Optional[float] = None

    def to_json(self):
        return asdict(self)


def refined_rates(alpha, beta, target, b_min0, lambda_convexity=None, sigma_min=None):
    """Refined rates ``nu_cov = 2 alpha_Gamma + beta``, ``nu_mean = 2 (alpha_Gamma + beta)``.

    Parameters
    ----------
    b_min0 : float
        Smallest eigenvalue of ``Gamma^{-1/2} Sigma(0) Gamma^{-1/2}``.
    lambda_convexity, sigma_min : float, optional
        When both are given, ``gamma_loglambda = lambda (2 alpha + beta sigma_min)``.
    """
    alpha, beta = check_weights(alpha, beta)
    if not b_min0 > 0:
        raise DomainError(f"b_min0 must be positive, got {b_min0}")
    aG = alpha_gamma(alpha, target)
    nu_cov = 2.0 * aG + beta
    nu_mean = 2.0 * (aG + beta)
    base = min(1.0, float(b_min0))
    pre_cov = base ** (-beta / nu_cov)
    pre_mean = base ** (-2.0 * beta / nu_cov)
    c_cov, c_mean = pl_constants(alpha, beta, target)
    gamma = None
    if lambda_convexity is not None and sigma_min is not None:
        gamma = float(lambda_convexity * (2.0 * alpha + beta * sigma_min))
    return DecayRates(nu_cov, nu_mean, pre_cov, pre_mean, c_cov, c_mean, gamma)


def fit_rate(times, values, tail=0.5):
    """Decay rate from a least-squares fit of ``log values`` on the last ``tail`` of the grid.

    Values below ``1e2`` machine epsilons are discarded. Returns NaN if fewer
    than three points remain.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    start = int(np.floor((1.0 - tail) * t.size))
    t, v = t[start:], v[start:]
    keep = v > _TINY
    if keep.sum() < 3:
        return float("nan")
    slope = np.polyfit(t[keep], np.log(v[keep]), 1)[0]
    return float(-slope)


@dataclass(frozen=True)
class DecayReport:
    mode: str
    status: str
    max_violation: float
    fitted_rate_cov: float
    fitted_rate_mean: float
    fitted_rate_energy: float
    rates: dict

    @property
    def passed(self):
        return self.status in ("pass", "vacuous")

    def to_json(self):
        return asdict(self)


def _violation(values, bound, scale):
    return float(np.max((values - bound) / scale))


def verify_decay(traj, rates, mode, E=None, target=None, inf_energy=0.0, slack=1e-9):
    """Check a decay estimate pointwise along a trajectory.

    Parameters
    ----------
    traj : Trajectory
        Normalized-flow trajectory with the energy split recorded (or the
        free energy, for ``log_lambda`` with a non-Gaussian target).
    rates : DecayRates
    mode : {"pl_global", "pl_sublevel", "refined", "log_lambda"}
    E : float, optional
        Sublevel for ``pl_sublevel``; defaults to the initial energy. The
        constants are then recomputed from ``target``.
    target : GaussianTarget, optional
        Needed for ``pl_sublevel``.
    inf_energy : float
        Infimum of the energy, subtracted in ``log_lambda`` mode.
    slack : float
        Tolerated violation relative to the initial value.

    Returns
    -------
    DecayReport
        ``max_violation`` is the largest excess of the trajectory over the
        bound, divided by the initial value. Fitted rates come from the tail
        half; the covariance rate is half the log-slope of ``h_cov``, i.e.
        the decay rate of ``Sigma - Gamma``.
    """
    t = np.asarray(traj.times, dtype=float)
    h_cov = np.asarray(traj.h_cov, dtype=float)
    h_mean = np.asarray(traj.h_mean, dtype=float)
    rd = rates.to_json()
    if mode == "log_lambda":
        F = np.asarray(traj.energy_total, dtype=float) - inf_energy
        gap0 = F[0]
        if not gap0 > 0:
            return DecayReport(mode, "vacuous", 0.0, np.nan, np.nan, np.nan, rd)
        if rates.gamma_loglambda is None:
            raise DomainError("log_lambda mode needs rates.gamma_loglambda")
        bound = np.exp(-rates.gamma_loglambda * t) * gap0
        viol = _violation(F, bound, gap0)
        rate = fit_rate(t, F)
        status = "pass" if viol <= slack else "fail"
        return DecayReport(mode, status, viol, np.nan, np.nan, rate, rd)

    E0 = h_cov[0] + h_mean[0]
    if not E0 > 0:
        return DecayReport(mode, "vacuous", 0.0, np.nan, np.nan, np.nan, rd)
    if mode == "refined":
        pairs = [(h_cov, rates.prefactor_cov * np.exp(-rates.nu_cov * t) * h_cov[0]),
                 (h_mean, rates.prefactor_mean * np.exp(-rates.nu_mean * t) * h_mean[0])]
    elif mode in ("pl_global", "pl_sublevel"):
        if mode == "pl_sublevel":
            if target is None:
                raise DomainError("pl_sublevel mode needs the target")
            level = E0 if E is None else E
            c_cov, c_mean = pl_constants(traj.meta["alpha"], traj.meta["beta"], target, level)
            rd = dict(rd, c_pl_cov=c_cov, c_pl_mean=c_mean, E=float(level))
        else:
            c_cov, c_mean = rates.c_pl_cov, rates.c_pl_mean
        pairs = [(h_cov, np.exp(-c_cov * t) * h_cov[0]), (h_mean, np.exp(-c_mean * t) * h_mean[0])]
    else:
        raise DomainError(f"unknown decay mode {mode!r}")
    viol = -np.inf
    for vals, bound in pairs:
        if vals[0] > 0:
            viol = max(viol, _violation(vals, bound, vals[0]))
    status = "pass" if viol <= slack else "fail"
    return DecayReport(mode, status, float(viol), 0.5 * fit_rate(t, h_cov), fit_rate(t, h_mean),
                       fit_rate(t, h_cov + h_mean), rd)


def b_min(Sigma, target):
    return float(np.linalg.eigvalsh(normalized_covariance(Sigma, target.Gamma))[0])


@dataclass(frozen=True)
class MinimizerResiduals:
    """Whitened residuals of ``Sigma^{-1} = E[hess V]`` and ``E[grad V] = 0``."""

    cov: np.ndarray
    mean: np.ndarray

    @property
    def cov_norm(self):
        return float(np.linalg.norm(self.cov))

    @property
    def mean_norm(self):
        return float(np.linalg.norm(self.mean))


def sublevel_minimizer_check(pot, p, est, rng=None):
    """Residuals of the stationarity conditions of the free energy over Gaussians.

    Returns ``Sigma^{1/2} E[hess V] Sigma^{1/2} - I`` and ``Sigma^{1/2} E[grad V]``,
    both dimensionless, with expectations under ``G(p.Sigma, p.m)``.
    """
    mom = estimate_moments(est, p.Sigma, p.m, pot, rng)
    R = sqrtm_spd(p.Sigma)
    return MinimizerResiduals(R @ mom.hess @ R - np.eye(p.dim), R @ mom.grad)
