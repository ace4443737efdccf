"""Right-hand sides, closed-form solutions and time integration of the reduced flows.

Public functions take the typed objects of :mod:`hkgf.core`. The integrators
work on plain arrays with optional leading batch axes so that parameter sweeps
can be advanced together; :func:`integrate` wraps them for single runs.
"""

import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.optimize import linear_sum_assignment

from hkgf._linalg import inv_sqrtm_spd, sym
from hkgf.core import (
    DissipationSplit,
    EnergySplit,
    GaussianTarget,
    ScaledGaussianParams,
    SimpleCoords,
    TangentHK,
)
from hkgf.errors import ConfigError, IntegrationError, MonotonicityError
from hkgf.onsager import check_weights
from hkgf.potentials import PotentialTarget, estimate_moments, free_energy

log = logging.getLogger(__name__)

SPD_FLOOR = 1e-12
MAX_HALVINGS = 40
EIG_GAP_TOL = 1e-8


@dataclass(frozen=True)
class FlowConfig:
    """Weights and time stepping of a flow run.

    ``track_mass=False`` freezes ``kappa`` and follows the flow of the
    normalized shape ``(Sigma, m)``, whose energy is ``h_cov + h_mean``.
    """

    alpha: float
    beta: float
    dt: float = 1e-3
    t_end: float = 1.0
    integrator: str = "rk4"
    track_mass: bool = True
    save_every: int = 1

    def __post_init__(self):
        check_weights(self.alpha, self.beta)
        if not self.dt > 0 or not self.t_end > 0:
            raise ConfigError("dt and t_end must be positive")
        if self.dt >= self.t_end:
            raise ConfigError(f"dt = {self.dt} must be smaller than t_end = {self.t_end}")
        if self.integrator not in ("rk4", "euler"):
            raise ConfigError(f"integrator must be 'rk4' or 'euler', got {self.integrator!r}")
        if self.save_every < 1:
            raise ConfigError("save_every must be at least 1")

    @property
    def n_steps(self):
        return max(1, int(round(self.t_end / self.dt)))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled solution of a flow or iterates of a descent.

    Arrays are indexed by time first. ``energy_total`` is the driving energy:
    ``kappa (h_cov + h_mean) + mass_term`` with mass, ``h_cov + h_mean``
    without. For non-Gaussian targets the split is unavailable (NaN) and
    ``free_energy`` holds the estimated KL divergence up to ``log Z``.
    """

    times: np.ndarray
    Sigma: np.ndarray
    m: np.ndarray
    kappa: np.ndarray
    h_cov: np.ndarray
    h_mean: np.ndarray
    mass_term: np.ndarray
    d_cov: np.ndarray
    d_mean: np.ndarray
    d_mass: np.ndarray
    track_mass: bool = True
    eigen: Optional[np.ndarray] = None
    degenerate: Optional[np.ndarray] = None
    free_energy: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.times.shape[0]

    @property
    def dim(self):
        return self.m.shape[1]

    @property
    def energy_total(self):
        if self.free_energy is not None and np.isnan(self.h_cov).all():
            return self.free_energy
        shape = self.h_cov + self.h_mean
        if self.track_mass:
            return self.kappa * shape + self.mass_term
        return shape

    @property
    def dissipation_total(self):
        return self.d_cov + self.d_mean + self.d_mass

    def point(self, i):
        return ScaledGaussianParams(self.Sigma[i], self.m[i], self.kappa[i])

    @property
    def points(self):
        return [self.point(i) for i in range(len(self))]

    @property
    def energy(self):
        return [EnergySplit(*map(float, v)) for v in zip(self.h_cov, self.h_mean, self.mass_term, self.kappa)]

    @property
    def dissipation(self):
        return [DissipationSplit(*map(float, v)) for v in zip(self.d_cov, self.d_mean, self.d_mass)]

    def columns(self):
        """Column names and the matching 2-D array, in CSV order."""
        N, d = self.m.shape
        names = ["t"]
        names += [f"sigma_{i + 1}_{j + 1}" for i in range(d) for j in range(d)]
        names += [f"m_{i + 1}" for i in range(d)]
        names += ["kappa", "h_cov", "h_mean", "d_cov", "d_mean"]
        cols = [self.times[:, None], self.Sigma.reshape(N, -1), self.m, self.kappa[:, None],
                self.h_cov[:, None], self.h_mean[:, None], self.d_cov[:, None], self.d_mean[:, None]]
        if self.eigen is not None:
            names += [f"b_{i + 1}" for i in range(d)]
            cols.append(self.eigen)
        return names, np.hstack(cols)

    def to_csv(self, path):
        names, data = self.columns()
        np.savetxt(path, data, delimiter=",", header=",".join(names), comments="", fmt="%.17g")


# -- array kernels (leading batch axes allowed) ------------------------------------


def _m2(x):
    return np.asarray(x, dtype=float)[..., None, None]


def _v1(x):
    return np.asarray(x, dtype=float)[..., None]


def _tr(M):
    return np.trace(M, axis1=-2, axis2=-1)


def _mv(M, v):
    return np.einsum("...ij,...j->...i", M, v)


def _symm(M):
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def energy_arrays(Sigma, m, Gi, n, logdetG):
    """``h_cov`` and ``h_mean`` for stacked ``Sigma``, ``m``."""
    d = Sigma.shape[-1]
    logdet = np.linalg.slogdet(Sigma)[1]
    h_cov = 0.5 * (np.einsum("...ij,...ji->...", Gi, Sigma) - d) - 0.5 * (logdet - logdetG)
    r = m - n
    h_mean = 0.5 * np.einsum("...i,...ij,...j->...", r, Gi, r)
    return np.maximum(h_cov, 0.0), h_mean


def dissipation_arrays(alpha, beta, Sigma, m, Gi, n):
    """Normalized ``(d_cov, d_mean)`` for stacked inputs."""
    d = Sigma.shape[-1]
    X = Gi @ Sigma - np.eye(d)
    X2 = X @ X
    d_cov = np.asarray(alpha) * _tr(np.linalg.solve(Sigma, X2)) + 0.5 * np.asarray(beta) * _tr(X2)
    g = _mv(Gi, m - n)
    d_mean = np.asarray(alpha) * np.sum(g * g, axis=-1) + np.asarray(beta) * np.einsum(
        "...i,...ij,...j->...", g, Sigma, g
    )
    return np.maximum(d_cov, 0.0), d_mean


def rhs_standard_arrays(alpha, beta, Sigma, m, kappa, Gi, n, logdetG, varkappa, track_mass=True):
    """Gaussian-target vector field in ``(Sigma, m, kappa)`` for stacked inputs."""
    d = Sigma.shape[-1]
    a2, b2 = _m2(alpha), _m2(beta)
    GS = Gi @ Sigma
    dS = a2 * (2.0 * np.eye(d) - GS - np.swapaxes(GS, -1, -2)) + b2 * (Sigma - Sigma @ GS)
    g = _mv(Gi, m - n)
    dm = -(_v1(alpha) * g + _v1(beta) * _mv(Sigma, g))
    if track_mass:
        h_cov, h_mean = energy_arrays(Sigma, m, Gi, n, logdetG)
        dk = -np.asarray(beta) * kappa * (np.log(kappa / varkappa) + h_cov + h_mean)
    else:
        dk = np.zeros_like(kappa)
    return _symm(dS), dm, dk


def rhs_simple_arrays(alpha, beta, A, b, c, Abar, bbar, cbar):
    """Vector field in simple coordinates for stacked inputs."""
    a2, b2 = _m2(alpha), _m2(beta)
    AbA = Abar @ A
    dA = a2 * (AbA + np.swapaxes(AbA, -1, -2) - 2.0 * A @ A) + b2 * (Abar - A)
    db = _v1(alpha) * (_mv(Abar, b) + _mv(A, bbar) - 2.0 * _mv(A, b)) + _v1(beta) * (bbar - b)
    dc = np.asarray(alpha) * (_tr(Abar - A) + np.sum(b * (b - bbar), axis=-1)) + np.asarray(beta) * (cbar - c)
    return _symm(dA), db, dc


def _axpy(y, k, h):
    return tuple(yi + _hb(h, ki) * ki for yi, ki in zip(y, k))


def _hb(h, ref):
    """Broadcast a (possibly per-batch) step size against ``ref``."""
    h = np.asarray(h, dtype=float)
    return h.reshape(h.shape + (1,) * (np.ndim(ref) - h.ndim))


def rk4_step(f, y, h):
    k1 = f(y)
    k2 = f(_axpy(y, k1, 0.5 * h))
    k3 = f(_axpy(y, k2, 0.5 * h))
    k4 = f(_axpy(y, k3, h))
    return tuple(
        yi + _hb(h, a) / 6.0 * (a + 2.0 * b + 2.0 * c + e) for yi, a, b, c, e in zip(y, k1, k2, k3, k4)
    )


def euler_step(f, y, h):
    return _axpy(y, f(y), h)


def _spd_ok(M):
    if not np.all(np.isfinite(M)):
        return False
    return bool(np.min(np.linalg.eigvalsh(_symm(M))) > SPD_FLOOR)


def advance(f, y, h, method="rk4", t=0.0, depth=0):
    """One step of size ``h``; halves the step while the matrix part leaves the SPD cone.

    ``y[0]`` must be the (stacked) matrix that has to stay positive definite.
    """
    step = rk4_step if method == "rk4" else euler_step
    y1 = step(f, y, h)
    y1 = (_symm(y1[0]),) + tuple(y1[1:])
    if _spd_ok(y1[0]) and all(np.all(np.isfinite(v)) for v in y1[1:]):
        return y1
    if depth >= MAX_HALVINGS:
        raise IntegrationError(f"step halving exhausted at t = {t:.6g}", time=t)
    log.debug("halving step at t=%.6g (depth %d)", t, depth + 1)
    half = 0.5 * np.asarray(h)
    y_mid = advance(f, y, half, method, t, depth + 1)
    return advance(f, y_mid, half, method, t + float(np.max(half)), depth + 1)


# -- typed right-hand sides ----------------------------------------------------


class SimpleTangent(NamedTuple):
    dA: np.ndarray
    db: np.ndarray
    dc: float


def rhs_simple(alpha, beta, q, qbar):
    """Vector field of the flow in simple coordinates ``(A, b, c)``."""
    alpha, beta = check_weights(alpha, beta)
    dA, db, dc = rhs_simple_arrays(alpha, beta, q.A, q.b, q.c, qbar.A, qbar.b, qbar.c)
    return SimpleTangent(dA, db, float(dc))


def rhs_gaussian_target(alpha, beta, p, target):
    """Gradient-flow vector field of the relative entropy for a Gaussian target."""
    alpha, beta = check_weights(alpha, beta)
    dS, dm, dk = rhs_standard_arrays(
        alpha, beta, p.Sigma, p.m, p.kappa, target.Gamma_inv, target.n, target.logdet, target.varkappa
    )
    return TangentHK(dS, dm, float(dk))


def general_target_arrays(alpha, beta, Sigma, m, kappa, mom, pot, track_mass=True):
    """Vector field with ``Gamma^{-1}`` and ``Gamma^{-1}(m-n)`` replaced by moments of V."""
    d = Sigma.shape[-1]
    G, g = mom.hess, mom.grad
    GS = G @ Sigma
    dS = alpha * (2.0 * np.eye(d) - GS - GS.T) + beta * (Sigma - Sigma @ GS)
    dm = -(alpha * g + beta * (Sigma @ g))
    dk = 0.0
    if track_mass and beta > 0 and pot.normalizer_known:
        H = free_energy(Sigma, mom.value, pot)
        dk = -beta * kappa * (np.log(kappa / pot.mass) + H)
    return sym(dS), dm, dk


def rhs_general_target(alpha, beta, p, pot, est, rng=None):
    """Vector field for a target ``exp(-V)`` using estimated Gaussian moments of V.

    The mass equation needs the relative entropy, hence ``log Z``; if the
    normalizer is unknown the mass is held fixed.
    """
    alpha, beta = check_weights(alpha, beta)
    mom = estimate_moments(est, p.Sigma, p.m, pot, rng)
    dS, dm, dk = general_target_arrays(alpha, beta, p.Sigma, p.m, p.kappa, mom, pot)
    return TangentHK(dS, dm, float(dk))


# -- closed forms ------------------------------------------------------------------


def _sym_exp_factory(C):
    w, V = np.linalg.eigh(C)

    def E(t):
        return (V * np.exp(-np.multiply.outer(np.asarray(t, dtype=float), w))[..., None, :]) @ V.T

    return w, V, E


def explicit_A(t, alpha, beta, A0, Abar, return_branch=False):
    """Closed-form precision ``A(t)`` of the simple-coordinate flow.

    With ``X = A - Abar`` and ``C = alpha Abar + beta I / 2`` the flow is the
    Riccati equation ``X' = -(C X + X C) - 2 alpha X^2``, solved by
    ``X(t) = E (X0^{-1} + alpha C^{-1} - alpha E C^{-1} E)^{-1} E`` with
    ``E = exp(-C t)``.

    Parameters
    ----------
    t : float or array_like
        Time(s); an array gives a stacked result.
    alpha, beta : float
    A0, Abar : ndarray
        Initial and target precision.
    return_branch : bool
        Also return which evaluation route was used: ``"equilibrium"``
        (``A0 == Abar``), ``"inverse"`` (the formula as written) or
        ``"product"`` (``X0 (I + W X0)^{-1}``, used when ``X0`` is singular).
    """
    alpha, beta = check_weights(alpha, beta)
    A0 = np.asarray(A0, dtype=float)
    Abar = np.asarray(Abar, dtype=float)
    d = A0.shape[0]
    t = np.asarray(t, dtype=float)
    X0 = sym(A0 - Abar)
    if not np.any(X0):
        out = np.broadcast_to(Abar, t.shape + (d, d)).copy()
        return (out, "equilibrium") if return_branch else out
    C = alpha * Abar + 0.5 * beta * np.eye(d)
    w, V, E = _sym_exp_factory(C)
    Et = E(t)
    Ci = (V / w) @ V.T
    W = alpha * (Ci - Et @ Ci @ Et)
    if np.linalg.cond(X0) < 1e10:
        branch = "inverse"
        inner = np.linalg.inv(X0) + W
        X = Et @ np.linalg.inv(inner) @ Et
    else:
        branch = "product"
        # X0 (I + W X0)^{-1} = ((I + W X0)^{-T} X0^T)^T
        M = np.swapaxes(np.eye(d) + W @ X0, -1, -2)
        Z = np.swapaxes(np.linalg.solve(M, np.broadcast_to(X0.T, M.shape)), -1, -2)
        X = Et @ Z @ Et
    out = _symm(Abar + X)
    return (out, branch) if return_branch else out


def explicit_transport_sigma(t, alpha, Sigma0, Gamma):
    """Pure-transport covariance ``Gamma + e^{-a t Gamma^{-1}} (Sigma0 - Gamma) e^{-a t Gamma^{-1}}``."""
    Gi = np.linalg.inv(Gamma)
    _, _, E = _sym_exp_factory(alpha * sym(Gi))
    Et = E(t)
    return _symm(Gamma + Et @ (np.asarray(Sigma0) - Gamma) @ Et)


def explicit_kappa(traj, beta, target):
    """Mass along a trajectory from the closed form.

    ``kappa(t) = varkappa (kappa0/varkappa)^{e^{-beta t}}
    exp(-beta int_0^t e^{-beta (t-s)} H(s) ds)`` with the integral computed
    by cumulative Simpson quadrature of the recorded shape energy. The factor
    ``beta`` in front of the integral follows from ``log(kappa/varkappa)`` solving
    ``u' = -beta (u + H)``.
    """
    t = np.asarray(traj.times, dtype=float)
    if t.shape[0] < 2:
        raise ConfigError("explicit_kappa needs at least two time points")
    dt = np.diff(t)
    if not np.allclose(dt, dt[0], rtol=1e-9, atol=0.0):
        raise ConfigError("explicit_kappa requires a uniform time grid")
    H = np.asarray(traj.h_cov + traj.h_mean, dtype=float)
    T = t[-1]
    weights = np.exp(beta * (t - T))
    integral = np.exp(-beta * (t - T)) * cumulative_simpson(weights * H, dx=dt[0], initial=0.0)
    k0 = float(traj.kappa[0])
    vk = target.varkappa
    return vk * np.exp(np.exp(-beta * t) * np.log(k0 / vk) - beta * integral)


# -- integration ------------------------------------------------------------------------


def _target_arrays(target):
    return np.array(target.Gamma_inv), np.array(target.n), float(target.logdet), float(target.varkappa)


def integrate(rhs, p0, cfg, target, est=None, seed=None, track_eigen=False):
    """Fixed-step integration of a reduced flow.

    Parameters
    ----------
    rhs : callable or None
        :func:`rhs_gaussian_target` (or ``None``) for a Gaussian target,
        :func:`rhs_general_target` for a :class:`PotentialTarget`. Any other
        callable ``rhs(alpha, beta, p, target) -> TangentHK`` is accepted too.
    p0 : ScaledGaussianParams
    cfg : FlowConfig
    target : GaussianTarget or PotentialTarget
    est : MomentEstimator, optional
        Required for potential targets.
    seed : int, optional
        Seed of the Monte Carlo stream for potential targets.
    track_eigen : bool
        Record the eigenvalues of ``Gamma^{-1/2} Sigma Gamma^{-1/2}`` (Gaussian
        targets), paired across steps by eigenvector overlap.

    Returns
    -------
    Trajectory

    Raises
    ------
    IntegrationError
        If step halving cannot keep ``Sigma`` positive definite.
    MonotonicityError
        If the energy of a Gaussian-target run increases by more than
        ``1e-8 (1 + |E|)`` over one step.
    """
    alpha, beta = cfg.alpha, cfg.beta
    N = cfg.n_steps
    h = cfg.t_end / N
    y = (np.array(p0.Sigma), np.array(p0.m), np.asarray(float(p0.kappa)))

    if isinstance(target, PotentialTarget):
        if est is None:
            raise ConfigError("a moment estimator is required for a potential target")
        rng = np.random.default_rng(est.seed if seed is None else seed)

        def f(state):
            S, m, k = state
            mom = estimate_moments(est, sym(S), m, target, rng)
            return general_target_arrays(alpha, beta, S, m, k, mom, target, cfg.track_mass)

        gaussian = None
    else:
        Gi, n, logdetG, vk = _target_arrays(target)
        if rhs not in (None, rhs_gaussian_target):

            def f(state):
                tan = rhs(alpha, beta, ScaledGaussianParams(sym(state[0]), state[1], state[2]), target)
                dk = tan.dkappa if cfg.track_mass else 0.0
                return np.array(tan.dSigma), np.array(tan.dm), np.asarray(dk)

        else:

            def f(state):
                return rhs_standard_arrays(alpha, beta, *state, Gi, n, logdetG, vk, cfg.track_mass)

        gaussian = target

    rec = _Recorder(cfg, gaussian, track_eigen)
    rec.add(0.0, y)
    E_prev = rec.last_energy if gaussian is not None else None
    for i in range(1, N + 1):
        t = (i - 1) * h
        y = advance(f, y, h, cfg.integrator, t)
        if gaussian is not None:
            E = rec.energy_of(y)
            if E > E_prev + 1e-8 * (1.0 + abs(E_prev)):
                raise MonotonicityError(
                    f"energy increased from {E_prev:.12g} to {E:.12g} at t = {i * h:.6g}", time=i * h
                )
            E_prev = E
        if i % cfg.save_every == 0 or i == N:
            rec.add(i * h, y)
    return rec.build(meta={"alpha": alpha, "beta": beta, "dt": h, "integrator": cfg.integrator})


class _Recorder:
    def __init__(self, cfg, target, track_eigen):
        self.cfg = cfg
        self.target = target
        self.track_eigen = track_eigen and target is not None
        self.rows = []
        self.eig = []
        self.deg = []
        self._V = None
        if target is not None:
            self.Gi, self.n, self.logdetG, self.vk = _target_arrays(target)
            self.Gm = inv_sqrtm_spd(target.Gamma)

    def energy_of(self, y):
        S, m, k = y
        hc, hm = energy_arrays(S, m, self.Gi, self.n, self.logdetG)
        if self.cfg.track_mass:
            return float(k * (hc + hm) + self.vk * _lambda_b(k / self.vk))
        return float(hc + hm)

    @property
    def last_energy(self):
        return self.energy_of(self.rows[-1][1])

    def add(self, t, y):
        S, m, k = (np.array(v, dtype=float) for v in y)
        self.rows.append((t, (S, m, k)))
        if self.track_eigen:
            B = self.Gm @ S @ self.Gm
            w, V = np.linalg.eigh(_symm(B))
            if self._V is not None:
                _, perm = linear_sum_assignment(-np.abs(self._V.T @ V))
                w, V = w[perm], V[:, perm]
            self._V = V
            self.eig.append(w)
            self.deg.append(bool(np.min(np.diff(np.sort(w)), initial=np.inf) < EIG_GAP_TOL))

    def build(self, meta):
        times = np.array([r[0] for r in self.rows])
        Sigma = np.stack([r[1][0] for r in self.rows])
        m = np.stack([r[1][1] for r in self.rows])
        kappa = np.array([float(r[1][2]) for r in self.rows])
        nan = np.full(times.shape, np.nan)
        if self.target is None:
            return Trajectory(times, Sigma, m, kappa, nan, nan.copy(), nan.copy(), nan.copy(), nan.copy(),
                              nan.copy(), self.cfg.track_mass, meta=meta)
        cfg = self.cfg
        hc, hm = energy_arrays(Sigma, m, self.Gi, self.n, self.logdetG)
        dc, dmn = dissipation_arrays(cfg.alpha, cfg.beta, Sigma, m, self.Gi, self.n)
        if cfg.track_mass:
            mass = np.array([self.vk * _lambda_b(k / self.vk) for k in kappa])
            dmass = cfg.beta * kappa * (np.log(kappa / self.vk) + hc + hm) ** 2
            dc, dmn = kappa * dc, kappa * dmn
        else:
            mass = np.zeros_like(times)
            dmass = np.zeros_like(times)
        eig = np.stack(self.eig) if self.track_eigen else None
        deg = np.array(self.deg) if self.track_eigen else None
        return Trajectory(times, Sigma, m, kappa, hc, hm, mass, dc, dmn, dmass, cfg.track_mass,
                          eigen=eig, degenerate=deg, meta=meta)


def _lambda_b(r):
    return r * np.log(r) - r + 1.0 if r > 0 else 1.0


def integrate_standard_batch(alpha, beta, Sigma0, m0, kappa0, Gi, n, logdetG, varkappa, dt, n_steps,
                             track_mass=True, save_every=1, integrator="rk4"):
    """RK4/Euler for a stack of Gaussian-target runs sharing the step count.

    ``alpha``, ``beta`` and ``dt`` may be per-run arrays. Returns the saved
    step indices and the stacked ``(Sigma, m, kappa)`` histories with time as
    the first axis.
    """

    def f(state):
        return rhs_standard_arrays(alpha, beta, *state, Gi, n, logdetG, varkappa, track_mass)

    return _run_batch(f, (Sigma0, m0, kappa0), dt, n_steps, save_every, integrator)


def integrate_simple_batch(alpha, beta, A0, b0, c0, Abar, bbar, cbar, dt, n_steps, save_every=1,
                           integrator="rk4"):
    """Batch integration of the simple-coordinate flow; see :func:`integrate_standard_batch`."""

    def f(state):
        return rhs_simple_arrays(alpha, beta, *state, Abar, bbar, cbar)

    return _run_batch(f, (A0, b0, c0), dt, n_steps, save_every, integrator)


def _run_batch(f, y, dt, n_steps, save_every, integrator):
    y = tuple(np.array(v, dtype=float) for v in y)
    saved = [0]
    hist = [[v.copy()] for v in y]
    for i in range(1, n_steps + 1):
        y = advance(f, y, dt, integrator, t=float(np.max((i - 1) * np.asarray(dt))))
        if i % save_every == 0 or i == n_steps:
            saved.append(i)
            for hl, v in zip(hist, y):
                hl.append(v.copy())
    return np.array(saved), tuple(np.stack(hl) for hl in hist)


# -- eigenvalues of the normalized covariance ---------------------------------------------------


class EigenRHS(NamedTuple):
    """Matrix field for ``B`` and, when the spectrum is simple, per-eigenvalue rates."""

    Bdot: np.ndarray
    eigenvalues: np.ndarray
    rates: Optional[np.ndarray]
    degenerate: bool


def normalized_covariance(Sigma, Gamma):
    """``B = Gamma^{-1/2} Sigma Gamma^{-1/2}``."""
    R = inv_sqrtm_spd(Gamma)
    return _symm(R @ Sigma @ R)


def _bdot(alpha, beta, B, Gi):
    GB = Gi @ B
    return _symm(-alpha * (GB + np.swapaxes(GB, -1, -2) - 2.0 * Gi) + beta * (B - B @ B))


def rhs_eigen(alpha, beta, B, Gamma):
    """Matrix ODE for ``B`` and the Hellmann-Feynman eigenvalue rates.

    ``b_i' = -(2 alpha <v_i, Gamma^{-1} v_i> + beta b_i)(b_i - 1)``; the
    rates are withheld (``None``) when two eigenvalues are closer than
    ``EIG_GAP_TOL``.
    """
    Gi = np.linalg.inv(np.asarray(Gamma, dtype=float))
    B = np.asarray(B, dtype=float)
    Bdot = _bdot(alpha, beta, B, Gi)
    w, V = np.linalg.eigh(_symm(B))
    degenerate = bool(w.shape[0] > 1 and np.min(np.diff(w)) < EIG_GAP_TOL)
    if degenerate:
        return EigenRHS(Bdot, w, None, True)
    g = np.einsum("ji,jk,ki->i", V, Gi, V)
    return EigenRHS(Bdot, w, -(2.0 * alpha * g + beta * w) * (w - 1.0), False)


def integrate_eigen(alpha, beta, B0, Gamma, dt, t_end):
    """Integrate ``B`` together with its eigenvalues by the Hellmann-Feynman ODE.

    The eigenvalue rates use the eigenvectors of the current ``B`` stage,
    matched to the tracked values in ascending order. Returns times, the
    eigenvalues of the integrated matrix, the directly integrated
    eigenvalues and a per-time degeneracy flag.
    """
    Gi = np.linalg.inv(np.asarray(Gamma, dtype=float))
    alpha, beta = check_weights(alpha, beta)

    def f(state):
        B, b = state
        w, V = np.linalg.eigh(_symm(B))
        g = np.einsum("ji,jk,ki->i", V, Gi, V)
        order = np.argsort(np.argsort(b))
        gb = g[order]
        return _bdot(alpha, beta, B, Gi), -(2.0 * alpha * gb + beta * b) * (b - 1.0)

    N = max(1, int(round(t_end / dt)))
    h = t_end / N
    B0 = np.asarray(B0, dtype=float)
    y = (B0.copy(), np.linalg.eigvalsh(B0))
    times, mat, direct, deg = [0.0], [y[1].copy()], [y[1].copy()], [False]
    for i in range(1, N + 1):
        y = advance(f, y, h, "rk4", (i - 1) * h)
        w = np.linalg.eigvalsh(y[0])
        times.append(i * h)
        mat.append(w)
        direct.append(np.sort(y[1]))
        deg.append(bool(w.shape[0] > 1 and np.min(np.diff(w)) < EIG_GAP_TOL))
    return np.array(times), np.stack(mat), np.stack(direct), np.array(deg)


def eigen_bounds(b0, nu, t):
    """Lower and upper envelopes for an eigenvalue of ``B`` started at ``b0``.

    Upper: ``max(1, 1 + (b0 - 1) e^{-nu t})``; lower:
    ``min(1, 1 / (1 + (1/b0 - 1) e^{-nu t}))``.
    """
    b0 = np.asarray(b0, dtype=float)
    e = np.exp(-nu * np.asarray(t, dtype=float))
    e = e.reshape(e.shape + (1,) * b0.ndim)
    upper = np.maximum(1.0, 1.0 + (b0 - 1.0) * e)
    lower = np.minimum(1.0, 1.0 / (1.0 + (1.0 / b0 - 1.0) * e))
    return lower, upper

