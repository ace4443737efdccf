"""Metric Hessian, geodesics and convexity diagnostics on normalized Gaussians.

The Hessian quadratic form of the relative entropy on ``(Sigma, m)`` with the
spherical HK metric splits as ``alpha^2 H_otto + alpha beta H_mix +
beta^2 H_she``. Geodesics follow Hamilton's equations for
``H(p, eta) = <eta, K(p) eta> / 2``.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import brentq

from hkgf._linalg import sqrtm_spd, sym
from hkgf.core import CotangentHK, ScaledGaussianParams, relative_entropy
from hkgf.errors import DomainError
from hkgf.flow import energy_arrays, rk4_step
from hkgf.onsager import check_weights, quadratic_form

# -- Hessian ---------------------------------------------------------------------


def _tr(M):
    return np.trace(M, axis1=-2, axis2=-1)


def _qf(u, M, v):
    return np.einsum("...i,...ij,...j->...", u, M, v)


def hessian_blocks(Sigma, m, S, mu, Gi, n):
    """The three Hessian blocks ``(H_otto, H_mix, H_she)``; inputs may be stacked.

    ``H_mix`` carries the S-only part
    ``4 tr(Gi Sigma S Sigma S) + 2 tr(Gi Sigma S S Sigma) + 2 tr(S^2 Sigma)``,
    which is what the second-variation formula produces.
    """
    d = Sigma.shape[-1]
    r = m - n
    SSig = S @ Sigma
    h_otto = 4.0 * _tr(S @ Gi @ SSig) + 4.0 * np.sum(S * S, axis=(-2, -1)) + _qf(mu, Gi, mu)
    Gir = np.einsum("...ij,...j->...i", Gi, r)
    h_mix = (
        4.0 * _tr(Gi @ Sigma @ SSig @ S)
        + 2.0 * _tr(Gi @ Sigma @ S @ SSig)
        + 2.0 * _tr(S @ SSig)
        + _qf(mu, Sigma @ Gi + np.eye(d), mu)
        + 2.0 * _qf(mu, SSig + np.swapaxes(SSig, -1, -2), Gir)
    )
    SigSSig = Sigma @ SSig
    h_she = (
        2.0 * _tr(SSig @ SSig @ Gi @ Sigma)
        + 2.0 * _qf(mu, SigSSig, Gir)
        + 0.5 * _qf(mu, Sigma @ Gi @ Sigma + Sigma, mu)
    )
    return h_otto, h_mix, h_she


def hessian_form(alpha, beta, pn, target, eta):
    """``<eta, Hess E_1(pn) eta>`` for the normalized flow (``eta.k`` is ignored)."""
    alpha, beta = check_weights(alpha, beta)
    ho, hm, hs = hessian_blocks(pn.Sigma, pn.m, eta.S, eta.mu, target.Gamma_inv, target.n)
    return float(alpha**2 * ho + alpha * beta * hm + beta**2 * hs)


def metric_form_arrays(alpha, beta, Sigma, S, mu):
    """``<eta, K eta>`` of the normalized (spherical) geometry for stacked inputs."""
    SSig = S @ Sigma
    otto = 4.0 * _tr(S @ SSig) + np.sum(mu * mu, axis=-1)
    he = 2.0 * _tr(SSig @ SSig) + _qf(mu, Sigma, mu)
    return alpha * otto + beta * he


def hessian_arrays(alpha, beta, Sigma, m, S, mu, Gi, n):
    ho, hm, hs = hessian_blocks(Sigma, m, S, mu, Gi, n)
    return alpha**2 * ho + alpha * beta * hm + beta**2 * hs


# -- geodesics -------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GeodesicState:
    """A point and its costate; ``normalized`` drops the mass and ``k``."""

    point: ScaledGaussianParams
    costate: CotangentHK
    normalized: bool = True

    def __post_init__(self):
        if self.point.dim != self.costate.mu.shape[0]:
            raise DomainError("point and costate dimensions differ")


class GeodesicDerivative(NamedTuple):
    dSigma: np.ndarray
    dm: np.ndarray
    dkappa: float
    dS: np.ndarray
    dmu: np.ndarray
    dk: float


def _geodesic_arrays(alpha, beta, normalized, y):
    Sigma, m, kappa, S, mu, k = y
    SSig = S @ Sigma
    if normalized:
        kappa, k = 1.0, 0.0
    dSigma = (2.0 * alpha / kappa) * (SSig + SSig.T) + (2.0 * beta / kappa) * (Sigma @ SSig)
    dm = (alpha / kappa) * mu + (beta / kappa) * (Sigma @ mu)
    dS = -(2.0 * alpha / kappa) * (S @ S) - (beta / kappa) * (2.0 * S @ Sigma @ S + 0.5 * np.outer(mu, mu))
    dmu = np.zeros_like(mu)
    if normalized:
        return sym(dSigma), dm, np.zeros(()), sym(dS), dmu, np.zeros(())
    otto = 4.0 * np.trace(S @ SSig) + mu @ mu
    he = 2.0 * np.trace(SSig @ SSig) + mu @ Sigma @ mu
    dkappa = beta * kappa * k
    dk = (alpha * otto + beta * he) / (2.0 * kappa**2) - 0.5 * beta * k**2
    return sym(dSigma), dm, np.asarray(dkappa), sym(dS), dmu, np.asarray(dk)


def geodesic_rhs(alpha, beta, st):
    """Hamilton's equations for ``H = <eta, K eta> / 2``."""
    alpha, beta = check_weights(alpha, beta)
    p, eta = st.point, st.costate
    y = (p.Sigma, p.m, p.kappa, eta.S, eta.mu, eta.k)
    return GeodesicDerivative(*(_to_py(v) for v in _geodesic_arrays(alpha, beta, st.normalized, y)))


def _to_py(v):
    v = np.asarray(v)
    return float(v) if v.ndim == 0 else v


def hamiltonian(alpha, beta, st):
    """``<eta, K(p) eta> / 2`` in the geometry of ``st``."""
    return 0.5 * quadratic_form(alpha, beta, st.point, st.costate, normalized=st.normalized)


def integrate_geodesic(alpha, beta, st, s_end, ds=1e-3, save_every=1):
    """RK4 integration of a geodesic from ``s = 0`` to ``s_end`` (may be negative).

    Returns the list of states at every ``save_every``-th grid point of
    ``0, ds, ..., s_end``; the start and the end point are always included.
    """
    alpha, beta = check_weights(alpha, beta)
    N = max(1, int(round(abs(s_end) / ds)))
    h = s_end / N
    p, eta = st.point, st.costate
    y = tuple(np.array(v, dtype=float) for v in (p.Sigma, p.m, p.kappa, eta.S, eta.mu, eta.k))

    def f(state):
        return _geodesic_arrays(alpha, beta, st.normalized, state)

    out = [st]
    for i in range(1, N + 1):
        y = rk4_step(f, y, h)
        y = (sym(y[0]),) + y[1:3] + (sym(y[3]),) + y[4:]
        if i % save_every == 0 or i == N:
            out.append(GeodesicState(ScaledGaussianParams(y[0], y[1], float(y[2])),
                                     CotangentHK(y[3], y[4], float(y[5])), st.normalized))
    return out


def geodesic_batch_arrays(alpha, beta, Sigma, m, S, mu):
    """Normalized geodesic field for stacked states; ``alpha``, ``beta`` may be per-run."""
    a2, b2 = np.asarray(alpha, dtype=float)[..., None, None], np.asarray(beta, dtype=float)[..., None, None]
    SSig = S @ Sigma
    dSigma = 2.0 * a2 * (SSig + np.swapaxes(SSig, -1, -2)) + 2.0 * b2 * (Sigma @ SSig)
    dm = a2[..., 0] * mu + b2[..., 0] * np.einsum("...ij,...j->...i", Sigma, mu)
    dS = -2.0 * a2 * (S @ S) - b2 * (2.0 * S @ Sigma @ S + 0.5 * mu[..., :, None] * mu[..., None, :])
    return sym(dSigma), dm, sym(dS), np.zeros_like(mu)


def integrate_geodesic_batch(alpha, beta, Sigma, m, S, mu, s_end, ds=1e-3, save_every=1):
    """RK4 for a stack of normalized geodesics sharing the grid.

    Returns the saved grid indices and stacked ``(Sigma, m, S, mu)``
    histories with the grid as the first axis.
    """
    N = max(1, int(round(abs(s_end) / ds)))
    h = s_end / N
    y = tuple(np.array(v, dtype=float) for v in (Sigma, m, S, mu))

    def f(state):
        return geodesic_batch_arrays(alpha, beta, *state)

    saved, hist = [0], [[v.copy()] for v in y]
    for i in range(1, N + 1):
        y = rk4_step(f, y, h)
        if i % save_every == 0 or i == N:
            saved.append(i)
            for hl, v in zip(hist, y):
                hl.append(v.copy())
    return np.array(saved), tuple(np.stack(hl) for hl in hist)


# -- convexity scan --------------------------------------------------------------------------


def random_spd(rng, d, log_range=2.0, size=None):
    """SPD matrices with log-eigenvalues uniform in ``[-log_range, log_range]``."""
    shape = () if size is None else (size,)
    Q, _ = np.linalg.qr(rng.standard_normal(shape + (d, d)))
    w = np.exp(rng.uniform(-log_range, log_range, shape + (d,)))
    return sym((Q * w[..., None, :]) @ np.swapaxes(Q, -1, -2))


def sample_states(target, n_samples, rng, log_range=2.0, mean_scale=2.0, centered=False):
    """Random normalized states ``(Sigma, m)`` around the target."""
    d = target.dim
    Sigma = random_spd(rng, d, log_range, n_samples)
    if centered:
        m = np.broadcast_to(target.n, (n_samples, d)).copy()
    else:
        m = target.n + mean_scale * rng.standard_normal((n_samples, d))
    return Sigma, m


def sample_unit_costates(d, n_samples, rng):
    """Cotangents ``(S, mu)`` with ``|S|_F^2 + |mu|^2 = 1``."""
    S = sym(rng.standard_normal((n_samples, d, d)))
    mu = rng.standard_normal((n_samples, d))
    nrm = np.sqrt(np.sum(S * S, axis=(1, 2)) + np.sum(mu * mu, axis=1))
    return S / nrm[:, None, None], mu / nrm[:, None]


def sample_sublevel(target, E, n_samples, rng, max_rounds=1000):
    """Rejection-sample normalized states with ``E_1 <= E``.

    Proposals are drawn in whitened coordinates: eigenvalues of
    ``B = Gamma^{-1/2} Sigma Gamma^{-1/2}`` log-uniform on the interval allowed
    by a single-eigenvalue budget ``phi(b) <= 2E``, random eigenvectors, and a
    whitened mean offset uniform in the ball of radius ``sqrt(2E)``.
    """
    d = target.dim
    phi_gap = lambda b: b - 1.0 - np.log(b) - 2.0 * E  # noqa: E731
    lo = brentq(phi_gap, 1e-300, 1.0) if E < 300 else np.exp(-1.0 - 2.0 * E)
    hi = brentq(phi_gap, 1.0, 10.0 + 10.0 * E)
    R = sqrtm_spd(target.Gamma)
    Gi, n, logdetG = np.array(target.Gamma_inv), np.array(target.n), target.logdet
    keep_S, keep_m = [], []
    have = 0
    for _ in range(max_rounds):
        k = max(2 * (n_samples - have), 64)
        Q, _ = np.linalg.qr(rng.standard_normal((k, d, d)))
        b = np.exp(rng.uniform(np.log(lo), np.log(hi), (k, d)))
        B = (Q * b[:, None, :]) @ np.swapaxes(Q, -1, -2)
        u = rng.standard_normal((k, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        w = u * (np.sqrt(2.0 * E) * rng.uniform(0.0, 1.0, (k, 1)) ** (1.0 / d))
        Sigma = sym(R @ B @ R)
        m = n + w @ R
        hc, hm = energy_arrays(Sigma, m, Gi, n, logdetG)
        ok = hc + hm <= E
        keep_S.append(Sigma[ok])
        keep_m.append(m[ok])
        have += int(ok.sum())
        if have >= n_samples:
            break
    else:
        raise RuntimeError(f"sublevel sampler accepted only {have} of {n_samples} points")
    return np.concatenate(keep_S)[:n_samples], np.concatenate(keep_m)[:n_samples]


@dataclass(frozen=True, eq=False)
class ScanReport:
    alpha: float
    beta: float
    n_samples: int
    seed: int
    min_quotient: float
    witness: tuple
    deciles: list

    def to_json(self):
        p, eta = self.witness
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "min_quotient": self.min_quotient,
            "witness": {"p": p.to_json(), "eta": {"S": eta.S.tolist(), "mu": eta.mu.tolist()}},
            "deciles": self.deciles,
        }


def convexity_scan(alpha, beta, target, n_samples, seed, sampler=None, sublevel=None, centered=False):
    """Smallest sampled Rayleigh quotient ``<eta, Hess eta> / <eta, K eta>``.

    Parameters
    ----------
    sampler : callable, optional
        ``sampler(rng, n) -> (Sigma, m)``; defaults to :func:`sample_states`
        (or :func:`sample_sublevel` when ``sublevel`` is an energy level).
    centered : bool
        Fix the mean at the target mean.

    The witness is re-evaluated with the scalar :func:`hessian_form` before it
    is reported.
    """
    alpha, beta = check_weights(alpha, beta)
    if n_samples < 1:
        raise DomainError("n_samples must be at least 1")
    rng = np.random.default_rng(seed)
    d = target.dim
    if sampler is not None:
        Sigma, m = sampler(rng, n_samples)
    elif sublevel is not None:
        Sigma, m = sample_sublevel(target, sublevel, n_samples, rng)
        if centered:
            m = np.broadcast_to(target.n, m.shape).copy()
    else:
        Sigma, m = sample_states(target, n_samples, rng, centered=centered)
    S, mu = sample_unit_costates(d, n_samples, rng)
    Gi, n = np.array(target.Gamma_inv), np.array(target.n)
    q = hessian_arrays(alpha, beta, Sigma, m, S, mu, Gi, n) / metric_form_arrays(alpha, beta, Sigma, S, mu)
    i = int(np.argmin(q))
    p = ScaledGaussianParams(Sigma[i], m[i])
    eta = CotangentHK(S[i], mu[i])
    q_min = hessian_form(alpha, beta, p, target, eta) / quadratic_form(alpha, beta, p, eta, normalized=True)
    deciles = np.quantile(q, np.linspace(0.0, 1.0, 11)).tolist()
    return ScanReport(alpha, beta, n_samples, seed, float(q_min), (p, eta), deciles)


# -- exact minimal quotient at a point ------------------------------------------------------------


def _basis(d):
    out = []
    for i in range(d):
        for j in range(i, d):
            E = np.zeros((d, d))
            E[i, j] = E[j, i] = 1.0 if i == j else np.sqrt(0.5)
            out.append((E, np.zeros(d)))
    for i in range(d):
        out.append((np.zeros((d, d)), np.eye(d)[i]))
    return out


def min_quotient_at(alpha, beta, pn, target):
    """Smallest generalized eigenvalue of ``Hess`` relative to ``K`` at ``pn``.

    Both quadratic forms are assembled on a basis of ``(S, mu)`` by
    polarization. Returns the value and the minimizing cotangent.
    """
    alpha, beta = check_weights(alpha, beta)
    basis = _basis(pn.dim)
    k = len(basis)
    S = np.array([b[0] for b in basis])
    mu = np.array([b[1] for b in basis])
    Si, Sj = S[:, None] + S[None, :], mu[:, None] + mu[None, :]
    Gi, n = np.array(target.Gamma_inv), np.array(target.n)
    Sigma, m = np.array(pn.Sigma), np.array(pn.m)

    def gram(form):
        diag = form(S, mu)
        both = form(Si.reshape(-1, *S.shape[1:]), Sj.reshape(-1, mu.shape[1])).reshape(k, k)
        return 0.5 * (both - diag[:, None] - diag[None, :])

    H = gram(lambda s, u: hessian_arrays(alpha, beta, Sigma, m, s, u, Gi, n))
    K = gram(lambda s, u: metric_form_arrays(alpha, beta, Sigma, s, u))
    w, V = eigh(sym(H), sym(K))
    c = V[:, 0]
    eta = CotangentHK(np.tensordot(c, S, axes=1), c @ mu)
    return float(w[0]), eta


def witness_sequence(alpha, beta, target, distances=(1.0, 10.0, 100.0), direction=None, Sigma=None):
    """Minimal quotients at ``Sigma`` (default ``Gamma``) and ``m = n + L u`` for each distance L."""
    d = target.dim
    u = np.eye(d)[0] if direction is None else np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    Sigma = target.Gamma if Sigma is None else Sigma
    out = []
    for L in distances:
        q, eta = min_quotient_at(alpha, beta, ScaledGaussianParams(Sigma, target.n + L * u), target)
        out.append((float(L), q, eta))
    return out


# -- sublevel bounds ---------------------------------------------------------------------------------


@dataclass(frozen=True)
class SublevelBound:
    """Radius bounding ``|m - n|``, ``|Sigma|`` and ``|Sigma^{-1}|`` on ``{E_1 <= E}``."""

    E: float
    r_E: float
    r_mean: float
    r_cov: float
    r_prec: float


def sublevel_radius(E, target):
    """Spectral-norm bounds valid on the sublevel set ``{E_1 <= E}``."""
    E = float(E)
    if not E > 0:
        raise DomainError(f"energy level must be positive, got {E}")
    g = np.linalg.eigvalsh(target.Gamma)
    r1 = np.sqrt(2.0 * g[-1] * E)
    r2 = g[-1] * (1.0 + np.log(4.0) + 4.0 * E)
    r3 = np.exp(1.0 + 2.0 * E) / g[0]
    return SublevelBound(E, float(max(r1, r2, r3)), float(r1), float(r2), float(r3))


def hellinger_geodesic_energy(p, target, s):
    """Energy along the pure-Hellinger geodesic ``(Sigma, m, s^2 kappa)``."""
    return np.array([relative_entropy(p.replace(kappa=si**2 * p.kappa), target) for si in np.atleast_1d(s)])
