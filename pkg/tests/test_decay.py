import numpy as np
import pytest

from conftest import random_target, spd
from hkgf.core import GaussianTarget, ScaledGaussianParams, entropy_differential, phi
from hkgf.decay import (
    H_aux,
    alpha_gamma,
    b_min,
    dissipation_split,
    fit_rate,
    h_inf,
    h_lower_bound,
    pl_constants,
    refined_rates,
    sublevel_interval,
    sublevel_minimizer_check,
    verify_decay,
    zeta,
)
from hkgf.errors import DomainError
from hkgf.flow import FlowConfig, dissipation_arrays, energy_arrays, integrate
from hkgf.geometry import sample_sublevel
from hkgf.onsager import quadratic_form
from hkgf.potentials import MomentEstimator, gaussian_potential


def _flow(alpha, beta, p0, t, t_end, dt=1e-2):
    return integrate(None, p0, FlowConfig(alpha, beta, dt=dt, t_end=t_end, track_mass=False), t)


def test_dissipation_split(rng):
    t = GaussianTarget([[1.0]], [0.0])
    assert dissipation_split(1.0, 0.0, ScaledGaussianParams([[2.0]], [0.0]), t).d_cov == pytest.approx(0.5)
    t = random_target(rng, 3)
    ds = dissipation_split(1.0, 1.0, ScaledGaussianParams(t.Gamma, t.n), t)
    assert ds.d_cov == pytest.approx(0, abs=1e-14) and ds.d_mean == 0
    for _ in range(20):
        p = ScaledGaussianParams(spd(rng, 3), rng.standard_normal(3))
        a, b = rng.uniform(0, 2, 2)
        ds = dissipation_split(a, b, p, t)
        eta = entropy_differential(p, t)
        assert ds.total == pytest.approx(quadratic_form(a, b, p, eta, normalized=True), rel=1e-12)


def test_H_aux_values():
    for d, b in [(1, 0), (0, 1), (0.3, 2.5)]:
        assert H_aux(d, b, 1.0) == pytest.approx(2 * (d + b))
        assert H_aux(d, b, 1 + 1e-7) == pytest.approx(2 * (d + b), rel=1e-6)
    with pytest.raises(DomainError):
        H_aux(1, 0, 0.0)


def test_h_inf_limits():
    assert h_inf(1, 0, (0, np.inf)) == 1.0
    assert h_inf(0, 1, (0, np.inf)) == 0.0
    with pytest.raises(DomainError):
        h_inf(1, 1, (2.0, 1.0))


def test_h_inf_against_grid(rng):
    for _ in range(20):
        d, b = rng.uniform(0.1, 3, 2)
        lo = np.exp(rng.uniform(-5, 0))
        hi = np.exp(rng.uniform(0.1, 5))
        y = np.exp(np.linspace(np.log(lo), np.log(hi), 400_001))
        grid = H_aux(d, b, y).min()
        val = h_inf(d, b, (lo, hi))
        assert val == pytest.approx(grid, rel=1e-6)
        assert h_lower_bound(d, b, (lo, hi)) <= val + 1e-12
        assert h_inf(d, 0, (lo, hi)) == pytest.approx(H_aux(d, 0, y).min(), rel=1e-6)
        assert h_inf(0, b, (lo, hi)) == pytest.approx(H_aux(0, b, y).min(), rel=1e-6)


def test_monotone_pieces():
    y = np.exp(np.linspace(np.log(1e-6), np.log(1e3), 20_000))
    assert np.all(np.diff(H_aux(1, 0, y)) <= 1e-12)
    assert np.all(np.diff(H_aux(0, 1, y)) >= -1e-12)
    assert np.all(phi(y) <= zeta(y) + 1e-15)


def test_pl_constants(rng):
    G = np.diag([1.0, 4.0])
    t = GaussianTarget(G, np.zeros(2))
    assert pl_constants(1.0, 0.0, t)[0] == pytest.approx(2 * 0.25)
    assert pl_constants(0.0, 1.0, t)[0] == 0.0
    for _ in range(100):
        t = random_target(rng, 2)
        a, b = rng.uniform(0, 3, 2)
        aG = alpha_gamma(a, t)
        c_cov, c_mean = pl_constants(a, b, t)
        assert 2 * aG - 1e-12 <= c_cov < 4 * aG + 2 * b
        assert c_mean == pytest.approx(2 * aG)
        cE, mE = pl_constants(a, b, t, E=1.0)
        assert mE == pytest.approx(2 * aG + 2 * b * np.exp(-3.0))


@pytest.mark.parametrize("E", [0.5, 2.0, 10.0])
def test_pl_inequality_pointwise(rng, E):
    t = GaussianTarget(np.diag([1.0, 4.0]), np.array([0.5, -1.0]))
    Gi = np.array(t.Gamma_inv)
    S, m = sample_sublevel(t, E, 10_000, rng)
    hc, hm = energy_arrays(S, m, Gi, t.n, t.logdet)
    for a, b in [(1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]:
        c_cov, c_mean = pl_constants(a, b, t, E)
        dc, dm = dissipation_arrays(a, b, S, m, Gi, t.n)
        assert np.all(dc >= c_cov * hc - 1e-12)
        assert np.all(dm >= c_mean * hm - 1e-12)


def test_refined_rates_examples():
    t = GaussianTarget(np.diag([1.0, 4.0]), np.zeros(2))
    r = refined_rates(1.0, 0.5, t, 2.0)
    assert r.nu_cov == pytest.approx(1.0) and r.nu_mean == pytest.approx(1.5)
    assert r.prefactor_cov == 1.0 and r.prefactor_mean == 1.0
    for G in (np.eye(2), np.diag([0.1, 7.0])):
        assert refined_rates(0.0, 0.8, GaussianTarget(G, np.zeros(2)), 0.5).nu_cov == pytest.approx(0.8)
    r = refined_rates(1.0, 1.0, t, 0.2)
    assert r.prefactor_cov > 1 and r.prefactor_mean > 1
    with pytest.raises(DomainError):
        refined_rates(1.0, 1.0, t, 0.0)
    r = refined_rates(1.0, 1.0, t, 0.5, lambda_convexity=0.25, sigma_min=2.0)
    assert r.gamma_loglambda == pytest.approx(0.25 * (2 + 2))


def test_mean_prefactor_exponent():
    # pure Hellinger flow from a narrow covariance: the mean bound needs the
    # exponent 2 beta / nu_cov; with nu_mean in its place it fails
    t = GaussianTarget(np.eye(1), np.zeros(1))
    p0 = ScaledGaussianParams([[0.1]], [1.0])
    traj = _flow(0.0, 1.0, p0, t, 8.0, dt=1e-3)
    r = refined_rates(0.0, 1.0, t, 0.1)
    assert verify_decay(traj, r, "refined").passed
    weak = 0.1 ** (-2.0 / r.nu_mean)
    bound = weak * np.exp(-r.nu_mean * traj.times) * traj.h_mean[0]
    assert np.max((traj.h_mean - bound) / traj.h_mean[0]) > 0.1


def test_verify_decay_vacuous(rng):
    t = random_target(rng, 2)
    traj = _flow(1.0, 1.0, t.as_params(), t, 1.0, dt=0.1)
    rep = verify_decay(traj, refined_rates(1.0, 1.0, t, 1.0), "refined")
    assert rep.status == "vacuous" and rep.passed


def test_refined_rate_sharp():
    t = GaussianTarget(np.eye(2), np.zeros(2))
    p0 = ScaledGaussianParams(np.diag([0.5, 2.0]), [0.3, -0.2])
    traj = _flow(1.0, 1.0, p0, t, 6.0, dt=1e-3)
    r = refined_rates(1.0, 1.0, t, b_min(p0.Sigma, t))
    rep = verify_decay(traj, r, "refined")
    assert rep.status == "pass" and rep.max_violation <= 1e-9
    assert rep.fitted_rate_cov == pytest.approx(3.0, rel=0.05)


def test_pl_sublevel_mode(rng):
    t = random_target(rng, 2)
    p0 = ScaledGaussianParams(spd(rng, 2, 1.0), t.n + rng.standard_normal(2))
    traj = _flow(1.0, 1.0, p0, t, 6.0)
    rep = verify_decay(traj, refined_rates(1.0, 1.0, t, b_min(p0.Sigma, t)), "pl_sublevel", target=t)
    assert rep.status == "pass"
    assert rep.rates["c_pl_cov"] <= 2 * rep.fitted_rate_cov
    g = verify_decay(traj, refined_rates(1.0, 1.0, t, b_min(p0.Sigma, t)), "pl_global")
    assert g.status == "pass"


def test_log_lambda_mode(rng):
    t = GaussianTarget(np.diag([1.0, 2.0]), np.zeros(2))
    p0 = ScaledGaussianParams(np.diag([0.5, 3.0]), [1.0, 1.0])
    traj = _flow(1.0, 1.0, p0, t, 4.0)
    lam = 0.5
    sigma_min = np.exp(-(1 + 2 * float(traj.energy_total[0])))
    r = refined_rates(1.0, 1.0, t, 0.5, lambda_convexity=lam, sigma_min=sigma_min)
    assert verify_decay(traj, r, "log_lambda").passed
    with pytest.raises(DomainError):
        verify_decay(traj, refined_rates(1.0, 1.0, t, 0.5), "log_lambda")
    with pytest.raises(DomainError):
        verify_decay(traj, r, "nonsense")


def test_fit_rate():
    t = np.linspace(0, 5, 100)
    assert fit_rate(t, 3 * np.exp(-2.5 * t)) == pytest.approx(2.5)
    assert np.isnan(fit_rate(t, np.zeros_like(t)))


def test_sublevel_interval():
    lo, hi = sublevel_interval(0.0)
    assert lo == pytest.approx(np.exp(-1)) and hi == pytest.approx(1 + np.log(4))


def test_minimizer_residuals(rng):
    t = random_target(rng, 2)
    pot = gaussian_potential(t)
    est = MomentEstimator("exact_gaussian")
    res = sublevel_minimizer_check(pot, t.as_params(), est)
    assert res.cov_norm < 1e-12 and res.mean_norm < 1e-12
    prev = (0.0, 0.0)
    for eps in (0.01, 0.1, 0.5):
        p = ScaledGaussianParams(t.Gamma * (1 + eps), t.n + eps)
        r = sublevel_minimizer_check(pot, p, est)
        assert r.cov_norm > prev[0] and r.mean_norm > prev[1]
        prev = (r.cov_norm, r.mean_norm)
