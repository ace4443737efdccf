"""Discrete-time HK-Gaussian gradient descent.

Each iteration applies a Bures-Wasserstein (transport) step, a Fisher-Rao
step on the precision and mean, and optionally a mass step, all driven by
Gaussian expectations of the target potential.
"""

import json
import logging
from dataclasses import dataclass

import numpy as np

from hkgf._linalg import sym
from hkgf.decay import fit_rate
from hkgf.errors import ConfigError, NumericalError
from hkgf.flow import Trajectory, dissipation_arrays, energy_arrays
from hkgf.potentials import (
    LogisticData,
    MomentEstimator,
    Moments,
    PotentialTarget,
    estimate_moments,
    free_energy,
    gaussian_potential,
    load_logistic_csv,
    logistic_potential,
)

__all__ = [
    "DescentConfig",
    "LogisticData",
    "MomentEstimator",
    "Moments",
    "PotentialTarget",
    "bw_step",
    "fr_step",
    "mass_step",
    "estimate_moments",
    "run_descent",
    "gaussian_potential",
    "logistic_potential",
    "load_logistic_csv",
    "synthetic_logistic",
    "newton_map",
    "write_descent_outputs",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DescentConfig:
    """Step size, weights and sampling plan of a descent run.

    ``n_mc`` samples are drawn per moment estimate; ``n_mc = 1`` is the
    single-sample scheme. ``resample_midstep`` draws fresh samples at the
    intermediate point between the transport and the Fisher-Rao step.
    """

    alpha: float
    beta: float
    tau: float
    n_steps: int
    n_mc: int = 1
    resample_midstep: bool = False
    seed: int = 0
    track_mass: bool = False

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta == 0:
            raise ConfigError("alpha and beta must be non-negative and not both zero")
        if not self.tau > 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.tau * self.beta >= 1:
            raise ConfigError(f"tau * beta = {self.tau * self.beta} must be below 1")
        if self.n_steps < 1 or self.n_mc < 1:
            raise ConfigError("n_steps and n_mc must be at least 1")


def bw_step(tau, alpha, Sigma, m, mom):
    """Transport step ``Sigma <- M Sigma M``, ``m <- m - tau alpha E[grad V]``.

    ``M = I + tau alpha (Sigma^{-1} - E[hess V])`` must be positive definite.
    """
    if alpha == 0:
        return Sigma, m
    d = m.shape[0]
    M = np.eye(d) + tau * alpha * (np.linalg.inv(Sigma) - sym(mom.hess))
    M = sym(M)
    lam = np.linalg.eigvalsh(M)[0]
    if not np.isfinite(lam) or lam <= 0:
        raise NumericalError(f"transport step matrix is not positive definite (smallest eigenvalue {lam:.3g})")
    return sym(M @ Sigma @ M), m - tau * alpha * mom.grad


def fr_step(tau, beta, Sigma, m, mom):
    """Fisher-Rao step on the precision, then the mean with the updated covariance."""
    if beta == 0:
        return Sigma, m
    if tau * beta >= 1:
        raise ConfigError("tau * beta must be below 1")
    P = (1.0 - tau * beta) * np.linalg.inv(Sigma) + tau * beta * sym(mom.hess)
    try:
        L = np.linalg.cholesky(sym(P))
    except np.linalg.LinAlgError:
        lam = np.linalg.eigvalsh(sym(P))[0]
        raise NumericalError(f"Fisher-Rao precision update is not positive definite ({lam:.3g})") from None
    Li = np.linalg.inv(L)
    Sigma_new = sym(Li.T @ Li)
    return Sigma_new, m - tau * beta * (Sigma_new @ mom.grad)


def mass_step(tau, beta, kappa, H, mass=1.0):
    """``kappa <- kappa - tau beta kappa (H + log(kappa / mass))``.

    If the update is not positive the step is halved (up to 40 times).
    """
    if beta == 0:
        return kappa
    h = tau
    for _ in range(41):
        new = kappa - h * beta * kappa * (H + np.log(kappa / mass))
        if new > 0:
            return float(new)
        h *= 0.5
    raise NumericalError("mass step stayed non-positive after 40 halvings")


def _relative_entropy_shape(Sigma, m, mom, pot):
    """Relative entropy of G(Sigma, m) to the normalized target (exact for Gaussians)."""
    if pot.gaussian is not None:
        g = pot.gaussian
        hc, hm = energy_arrays(Sigma, m, np.array(g.Gamma_inv), np.array(g.n), g.logdet)
        return float(hc + hm)
    if not pot.normalizer_known:
        return float("nan")
    return float(free_energy(Sigma, mom.value, pot))


def run_descent(cfg, p0, pot, est=None):
    """Run the discrete scheme from ``p0``.

    Parameters
    ----------
    cfg : DescentConfig
    p0 : ScaledGaussianParams
    pot : PotentialTarget
    est : MomentEstimator, optional
        Defaults to Monte Carlo with ``cfg.n_mc`` samples.

    Returns
    -------
    Trajectory
        ``times`` are ``k tau``; ``free_energy`` holds the per-step KL (or
        its estimate) of the normalized Gaussian. The run is deterministic
        given ``cfg.seed``.
    """
    if est is None:
        est = MomentEstimator("monte_carlo", n_mc=cfg.n_mc, seed=cfg.seed)
    if cfg.track_mass and cfg.beta > 0 and pot.gaussian is None and not pot.normalizer_known:
        raise ConfigError("the mass step needs a target with known normalizer")
    rng = np.random.default_rng(cfg.seed)
    Sigma, m, kappa = np.array(p0.Sigma), np.array(p0.m), float(p0.kappa)
    Ss, ms, ks, kl = [Sigma], [m], [kappa], []
    for k in range(cfg.n_steps):
        try:
            mom = estimate_moments(est, Sigma, m, pot, rng)
            H = _relative_entropy_shape(Sigma, m, mom, pot)
            kl.append(H)
            S1, m1 = bw_step(cfg.tau, cfg.alpha, Sigma, m, mom)
            if cfg.resample_midstep and cfg.alpha > 0 and cfg.beta > 0:
                mom = estimate_moments(est, S1, m1, pot, rng)
            Sigma, m = fr_step(cfg.tau, cfg.beta, S1, m1, mom)
            if cfg.track_mass:
                kappa = mass_step(cfg.tau, cfg.beta, kappa, H, pot.mass)
        except NumericalError as exc:
            raise NumericalError(f"descent failed at iteration {k}: {exc}") from exc
        Ss.append(Sigma)
        ms.append(m)
        ks.append(kappa)
    mom = estimate_moments(est, Sigma, m, pot, rng)
    kl.append(_relative_entropy_shape(Sigma, m, mom, pot))
    return _descent_trajectory(cfg, pot, np.stack(Ss), np.stack(ms), np.array(ks), np.array(kl))


def _descent_trajectory(cfg, pot, Sigma, m, kappa, kl):
    times = cfg.tau * np.arange(Sigma.shape[0])
    meta = {"alpha": cfg.alpha, "beta": cfg.beta, "tau": cfg.tau, "seed": cfg.seed, "descent": True}
    if pot.gaussian is not None:
        g = pot.gaussian
        Gi, n = np.array(g.Gamma_inv), np.array(g.n)
        hc, hm = energy_arrays(Sigma, m, Gi, n, g.logdet)
        dc, dm = dissipation_arrays(cfg.alpha, cfg.beta, Sigma, m, Gi, n)
        vk = g.varkappa
        mass = vk * (kappa / vk * np.log(kappa / vk) - kappa / vk + 1.0)
        if not cfg.track_mass:
            mass = np.zeros_like(kappa)
        return Trajectory(times, Sigma, m, kappa, hc, hm, mass, dc, dm, np.zeros_like(kappa),
                          cfg.track_mass, free_energy=kl, meta=meta)
    nan = np.full(times.shape, np.nan)
    return Trajectory(times, Sigma, m, kappa, nan, nan.copy(), nan.copy(), nan.copy(), nan.copy(),
                      nan.copy(), cfg.track_mass, free_energy=kl, meta=meta)


def write_descent_outputs(traj, csv_path, json_path=None, extra=None):
    """Per-step CSV (``k, kl_estimate, m_i, sigma_ij, kappa``) and a JSON summary."""
    N, d = traj.m.shape
    names = ["k", "kl_estimate"] + [f"m_{i + 1}" for i in range(d)]
    names += [f"sigma_{i + 1}_{j + 1}" for i in range(d) for j in range(d)] + ["kappa"]
    data = np.hstack([np.arange(N)[:, None], traj.free_energy[:, None], traj.m,
                      traj.Sigma.reshape(N, -1), traj.kappa[:, None]])
    np.savetxt(csv_path, data, delimiter=",", header=",".join(names), comments="", fmt="%.17g")
    summary = {
        "final": traj.point(N - 1).to_json(),
        "final_kl_estimate": float(traj.free_energy[-1]),
        "fitted_rate": fit_rate(traj.times, traj.free_energy),
        "n_steps": N - 1,
    }
    summary.update(traj.meta)
    if extra:
        summary.update(extra)
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump(summary, fh, indent=2, default=float)
    return summary


# -- logistic regression helpers ------------------------------------------------------------


def synthetic_logistic(n_samples, theta, seed, scale=1.0, reg_lambda=1.0):
    """Features ``scale * N(0, I)`` and labels drawn from the logistic model with ``theta``."""
    rng = np.random.default_rng(seed)
    theta = np.asarray(theta, dtype=float)
    X = scale * rng.standard_normal((n_samples, theta.shape[0]))
    prob = 1.0 / (1.0 + np.exp(-(X @ theta)))
    y = (rng.uniform(size=n_samples) < prob).astype(float)
    return LogisticData(X, y, reg_lambda)


def newton_map(pot, theta0=None, tol=1e-12, max_iter=200):
    """Minimize ``V`` by Newton's method with Armijo backtracking.

    Returns the minimizer; raises :class:`NumericalError` if the gradient
    norm does not drop below ``tol``.
    """
    theta = np.zeros(pot.dim) if theta0 is None else np.array(theta0, dtype=float)
    val = float(pot.value(theta)[0])
    for _ in range(max_iter):
        g = pot.grad(theta)[0]
        if np.linalg.norm(g) < tol:
            return theta
        step = np.linalg.solve(pot.hess(theta)[0], g)
        t = 1.0
        while True:
            cand = theta - t * step
            cval = float(pot.value(cand)[0])
            if cval <= val - 1e-4 * t * float(g @ step) or t < 1e-12:
                break
            t *= 0.5
        theta, val = cand, cval
    if np.linalg.norm(pot.grad(theta)[0]) < 1e3 * tol:
        return theta
    raise NumericalError("Newton iteration did not converge")

