import numpy as np
import pytest

from conftest import random_point, random_target, spd
from hkgf.core import (
    GaussianTarget,
    ScaledGaussianParams,
    SimpleCoords,
    entropy_differential,
    to_simple,
    to_standard,
)
from hkgf.decay import alpha_gamma
from hkgf.descent import synthetic_logistic
from hkgf.errors import ConfigError, IntegrationError, MonotonicityError
from hkgf.flow import (
    FlowConfig,
    TangentHK,
    eigen_bounds,
    explicit_A,
    explicit_kappa,
    explicit_transport_sigma,
    integrate,
    integrate_eigen,
    normalized_covariance,
    rhs_eigen,
    rhs_gaussian_target,
    rhs_general_target,
    rhs_simple,
)
from hkgf.onsager import apply_hk_red
from hkgf.potentials import MomentEstimator, PotentialTarget, gaussian_potential, logistic_potential

EXACT = MomentEstimator("exact_gaussian")


def test_simple_rhs_examples():
    qbar = SimpleCoords([[1.0]], [0.0], 0.0)
    assert rhs_simple(1.0, 0.0, SimpleCoords([[2.0]], [0.0], 0.0), qbar).dA[0, 0] == pytest.approx(-4.0)
    q = SimpleCoords(spd(np.random.default_rng(0), 2), [0.3, -0.1], 0.2)
    zero = rhs_simple(0.7, 0.4, q, q)
    assert np.allclose(zero.dA, 0) and np.allclose(zero.db, 0) and zero.dc == pytest.approx(0, abs=1e-15)


def test_gaussian_rhs_at_target(rng):
    t = random_target(rng, 3)
    v = rhs_gaussian_target(1.0, 1.0, t.as_params(), t)
    assert np.allclose(v.dSigma, 0, atol=1e-14) and np.allclose(v.dm, 0) and v.dkappa == pytest.approx(0)


def test_gradient_structure(rng):
    for _ in range(1000):
        d = int(rng.integers(1, 4))
        t, p = random_target(rng, d), random_point(rng, d)
        a, b = rng.uniform(0, 2, 2)
        v = rhs_gaussian_target(a, b, p, t)
        w = apply_hk_red(a, b, p, entropy_differential(p, t))
        assert np.allclose(v.dSigma, -w.dSigma, rtol=1e-12, atol=1e-12)
        assert np.allclose(v.dm, -w.dm, rtol=1e-12, atol=1e-12)
        assert v.dkappa == pytest.approx(-w.dkappa, rel=1e-12, abs=1e-12)


def test_coordinate_equivariance(rng):
    h = 1e-6
    for _ in range(20):
        t, p = random_target(rng, 2), random_point(rng, 2)
        q, qbar = to_simple(p), to_simple(t.as_params())
        v = rhs_simple(0.8, 0.6, q, qbar)
        plus = to_standard(SimpleCoords(q.A + h * v.dA, q.b + h * v.db, q.c + h * v.dc))
        minus = to_standard(SimpleCoords(q.A - h * v.dA, q.b - h * v.db, q.c - h * v.dc))
        w = rhs_gaussian_target(0.8, 0.6, p, t)
        scale = 1 + np.abs(w.dSigma).max()
        assert np.allclose((plus.Sigma - minus.Sigma) / (2 * h), w.dSigma, atol=1e-6 * scale)
        assert np.allclose((plus.m - minus.m) / (2 * h), w.dm, atol=1e-6 * (1 + np.abs(w.dm).max()))
        assert (plus.kappa - minus.kappa) / (2 * h) == pytest.approx(w.dkappa, abs=1e-6 * (1 + abs(w.dkappa)))


def test_shape_mass_decoupling(rng):
    t, p = random_target(rng, 3), random_point(rng, 3)
    ref = rhs_gaussian_target(1.0, 2.0, p.replace(kappa=1.0), t)
    for k in (0.1, 10.0):
        v = rhs_gaussian_target(1.0, 2.0, p.replace(kappa=k), t)
        assert np.array_equal(v.dSigma, ref.dSigma) and np.array_equal(v.dm, ref.dm)


def test_explicit_A_examples():
    A = explicit_A(np.log(2.0), 0.0, 1.0, np.array([[3.0]]), np.array([[1.0]]))
    assert A[0, 0] == pytest.approx(2.0)
    A = explicit_A(np.log(2.0), 0.0, 2.0, np.array([[3.0]]), np.array([[1.0]]))
    assert A[0, 0] == pytest.approx(1.5)
    A0 = np.diag([2.0, 0.5])
    assert np.allclose(explicit_A(0.0, 1.0, 1.0, A0, np.eye(2)), A0)
    _, branch = explicit_A(1.0, 1.0, 1.0, np.eye(2), np.eye(2), return_branch=True)
    assert branch == "equilibrium"
    _, branch = explicit_A(1.0, 1.0, 1.0, A0, np.eye(2), return_branch=True)
    assert branch == "inverse"


def test_explicit_A_singular_difference():
    A0 = np.diag([3.0, 1.0])
    A, branch = explicit_A(0.7, 1.0, 0.5, A0, np.eye(2), return_branch=True)
    assert branch == "product"
    # the second direction stays at equilibrium, the first is a scalar Riccati problem
    assert A[1, 1] == pytest.approx(1.0) and A[0, 1] == pytest.approx(0.0)
    ref = explicit_A(0.7, 1.0, 0.5, np.array([[3.0]]), np.array([[1.0]]))
    assert A[0, 0] == pytest.approx(ref[0, 0], rel=1e-12)


def test_explicit_A_matches_rhs():
    A = explicit_A(np.array([0.5 - 1e-6, 0.5 + 1e-6]), 1.0, 0.0, np.array([[2.0]]), np.array([[1.0]]))
    slope = (A[1] - A[0]) / 2e-6
    q = SimpleCoords(explicit_A(0.5, 1.0, 0.0, np.array([[2.0]]), np.array([[1.0]])), [0.0], 0.0)
    v = rhs_simple(1.0, 0.0, q, SimpleCoords([[1.0]], [0.0], 0.0))
    assert slope[0, 0] == pytest.approx(v.dA[0, 0], rel=1e-7)


def _run(alpha, beta, p0, t, dt, t_end, track_eigen=False, **kw):
    cfg = FlowConfig(alpha, beta, dt=dt, t_end=t_end, **kw)
    return integrate(rhs_gaussian_target, p0, cfg, t, track_eigen=track_eigen)


def test_rk4_order_against_closed_form(rng):
    t = GaussianTarget(spd(rng, 2), rng.standard_normal(2))
    p0 = ScaledGaussianParams(spd(rng, 2, 1.5), rng.standard_normal(2))
    exact = explicit_A(1.0, 1.0, 0.7, np.linalg.inv(p0.Sigma), np.linalg.inv(t.Gamma))
    errs = []
    for dt in (0.1, 0.05, 0.025):
        traj = _run(1.0, 0.7, p0, t, dt, 1.0)
        errs.append(np.abs(np.linalg.inv(traj.Sigma[-1]) - exact).max())
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert orders.min() >= 3.5


def test_transport_closed_form(rng):
    t = GaussianTarget(spd(rng, 2), np.zeros(2))
    p0 = ScaledGaussianParams(spd(rng, 2), np.zeros(2))
    traj = _run(1.0, 0.0, p0, t, 1e-3, 0.5)
    assert np.allclose(traj.Sigma[-1], explicit_transport_sigma(0.5, 1.0, p0.Sigma, t.Gamma), atol=1e-10)


def test_energy_dissipation_identity(rng):
    t, p0 = random_target(rng, 2), random_point(rng, 2)
    errs = []
    for dt in (1e-3, 5e-4, 2.5e-4):
        traj = _run(1.0, 1.0, p0, t, dt, 2 * dt, integrator="euler")
        E = traj.energy_total
        errs.append(abs((E[1] - E[0]) / dt + traj.dissipation_total[0]))
    assert np.log2(errs[0] / errs[1]) >= 0.9 and np.log2(errs[1] / errs[2]) >= 0.9


def test_monotone_energy_and_spd(rng):
    for d in (1, 3, 5):
        t, p0 = random_target(rng, d), random_point(rng, d)
        traj = _run(0.5, 1.5, p0, t, 1e-2, 3.0)
        assert np.all(np.diff(traj.energy_total) <= 1e-12)
        assert min(np.linalg.eigvalsh(S)[0] for S in traj.Sigma) > 0


def test_equilibrium_constant(rng):
    t = random_target(rng, 2)
    traj = _run(1.0, 1.0, t.as_params(), t, 0.1, 1.0)
    assert np.allclose(traj.Sigma, t.Gamma, atol=1e-14) and np.allclose(traj.kappa, t.varkappa)


def test_coarse_precision_bound(rng):
    for _ in range(10):
        t, p0 = random_target(rng, 3), random_point(rng, 3)
        beta = rng.uniform(0.2, 2.0)
        traj = _run(rng.uniform(0, 2), beta, p0, t, 1e-2, 3.0, save_every=10)
        X = np.linalg.inv(traj.Sigma) - np.linalg.inv(t.Gamma)
        n2 = np.sum(X * X, axis=(1, 2))
        assert np.all(n2 <= np.exp(-beta * traj.times) * n2[0] * (1 + 1e-9) + 1e-14)


def test_eigen_sandwich(rng):
    t = GaussianTarget(np.diag([1.0, 3.0, 0.5]), np.zeros(3))
    for alpha, beta in [(1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.3, 2.0)]:
        p0 = ScaledGaussianParams(spd(rng, 3, 2.0), np.zeros(3))
        traj = _run(alpha, beta, p0, t, 1e-2, 4.0, track_eigen=True, track_mass=False)
        nu = 2 * alpha_gamma(alpha, t) + beta
        lo, hi = eigen_bounds(traj.eigen[0], nu, traj.times)
        assert np.all(traj.eigen >= lo - 1e-9) and np.all(traj.eigen <= hi + 1e-9)


def test_eigen_rhs_examples():
    r = rhs_eigen(1.0, 1.0, np.array([[2.0]]), np.array([[1.0]]))
    assert r.rates[0] == pytest.approx(-4.0) and r.Bdot[0, 0] == pytest.approx(-4.0)
    r = rhs_eigen(1.0, 1.0, np.eye(3), np.diag([1.0, 2.0, 3.0]))
    assert np.allclose(r.Bdot, 0) and r.degenerate and r.rates is None


def test_integrate_eigen_tracks_matrix(rng):
    G = np.diag([1.0, 2.0])
    B0 = normalized_covariance(spd(rng, 2, 1.0), G)
    times, mat, direct, deg = integrate_eigen(1.0, 0.5, B0, G, 1e-3, 1.0)
    assert np.allclose(mat, direct, atol=1e-6)


def test_explicit_kappa(rng):
    t, p0 = random_target(rng, 2), random_point(rng, 2)
    traj = _run(1.0, 1.3, p0, t, 1e-3, 2.0)
    k = explicit_kappa(traj, 1.3, t)
    assert np.allclose(k, traj.kappa, rtol=1e-8)
    eq = _run(1.0, 1.0, t.as_params(), t, 0.01, 1.0)
    assert np.allclose(explicit_kappa(eq, 1.0, t), t.varkappa)
    traj0 = _run(1.0, 0.0, p0, t, 1e-2, 1.0)
    assert np.allclose(traj0.kappa, p0.kappa) and np.allclose(explicit_kappa(traj0, 0.0, t), p0.kappa)


def test_explicit_kappa_needs_uniform_grid(rng):
    t, p0 = random_target(rng, 1), random_point(rng, 1)
    traj = _run(1.0, 1.0, p0, t, 0.1, 1.0)
    object.__setattr__(traj, "times", traj.times ** 2)
    with pytest.raises(ConfigError):
        explicit_kappa(traj, 1.0, t)


def test_general_target_matches_gaussian(rng):
    for _ in range(100):
        t, p = random_target(rng, 2), random_point(rng, 2)
        pot = gaussian_potential(t)
        v = rhs_general_target(0.9, 1.1, p, pot, EXACT)
        w = rhs_gaussian_target(0.9, 1.1, p, t)
        assert np.allclose(v.dSigma, w.dSigma, rtol=1e-12, atol=1e-12)
        assert np.allclose(v.dm, w.dm, rtol=1e-12, atol=1e-12)
        assert v.dkappa == pytest.approx(w.dkappa, rel=1e-12, abs=1e-12)
    traj_g = integrate(None, p, FlowConfig(1.0, 1.0, dt=0.01, t_end=0.5), t)
    traj_p = integrate(rhs_general_target, p, FlowConfig(1.0, 1.0, dt=0.01, t_end=0.5), pot, est=EXACT)
    assert np.allclose(traj_g.Sigma, traj_p.Sigma, atol=1e-12)


def test_flat_potential_keeps_mean():
    zero = PotentialTarget("custom", lambda x: np.zeros(len(np.atleast_2d(x))),
                           lambda x: np.zeros_like(np.atleast_2d(x)),
                           lambda x: np.zeros((len(np.atleast_2d(x)), 2, 2)), 2)
    p = ScaledGaussianParams(np.eye(2), [1.0, 2.0])
    v = rhs_general_target(1.0, 0.0, p, zero, MomentEstimator("monte_carlo", n_mc=10))
    assert np.array_equal(v.dm, np.zeros(2))


def test_logistic_rhs():
    pot = logistic_potential(synthetic_logistic(50, [1.0, -1.0], seed=1))
    p = ScaledGaussianParams(np.eye(2), np.zeros(2))
    v = rhs_general_target(1.0, 1.0, p, pot, MomentEstimator("monte_carlo", n_mc=100), np.random.default_rng(0))
    assert np.all(np.isfinite(v.dSigma)) and np.array_equal(v.dSigma, v.dSigma.T)
    assert v.dkappa == 0.0


def test_csv_columns(tmp_path, rng):
    t, p0 = random_target(rng, 2), random_point(rng, 2)
    traj = _run(1.0, 1.0, p0, t, 0.1, 1.0, track_eigen=True)
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    header = path.read_text().splitlines()[0].split(",")
    assert header[:5] == ["t", "sigma_1_1", "sigma_1_2", "sigma_2_1", "sigma_2_2"]
    assert header[-2:] == ["b_1", "b_2"]
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (len(traj), len(header))


def test_integration_failure_reported(rng):
    t, p0 = random_target(rng, 2), random_point(rng, 2)

    def broken(alpha, beta, p, target):
        return TangentHK(np.full((2, 2), np.nan), np.zeros(2), 0.0)

    with pytest.raises(IntegrationError) as err:
        integrate(broken, p0, FlowConfig(1.0, 1.0, dt=0.1, t_end=1.0), t)
    assert err.value.time == 0.0


def test_energy_increase_detected(rng):
    t, p0 = random_target(rng, 2), random_point(rng, 2)

    def ascent(alpha, beta, p, target):
        return -rhs_gaussian_target(alpha, beta, p, target)

    with pytest.raises(MonotonicityError):
        integrate(ascent, p0, FlowConfig(1.0, 1.0, dt=0.01, t_end=0.1), t)


def test_config_validation():
    with pytest.raises(ConfigError):
        FlowConfig(0.0, 0.0)
    with pytest.raises(ConfigError):
        FlowConfig(1.0, 1.0, dt=2.0, t_end=1.0)
    with pytest.raises(ConfigError):
        FlowConfig(1.0, 1.0, integrator="midpoint")
