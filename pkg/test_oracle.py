"""Test the exact Dirac-mixture and Gaussian oracles."""

import math

import numpy as np
import pytest
from scipy.integrate import trapezoid
from scipy.stats import multivariate_normal

from conftest import diffused_points
from src.diffusion.schedules import NoiseSchedule, ScheduleKind
from src.fisher.checks import check_point, fd_hessian
from src.fisher.oracle import DiracDataset, GaussianInitial, make_law
from src.training.datasets import NONAFFINE3
from src.utils.errors import ConfigError, DomainError

X = np.array([0.3, 0.3])


# ==================== WEIGHTS / DENSITY ====================

def test_single_point_weights_and_density(single_point, ve):
    x, t = np.array([0.1, 0.4]), 0.5
    w = single_point.weights(ve, x, t)
    np.testing.assert_array_equal(w.w, [1.0])
    alpha, sigma = ve.alpha(t), ve.sigma(t)
    y = single_point.points[0]
    expected = -math.log(2 * math.pi * sigma ** 2) - float((x - alpha * y) @ (x - alpha * y)) / (2 * sigma ** 2)
    assert single_point.log_density(ve, x, t) == pytest.approx(expected, rel=1e-12)


def test_symmetric_weights_at_origin():
    ds = DiracDataset(points=[[0.7], [-0.7]])
    sched = NoiseSchedule(kind=ScheduleKind.VP)
    w = ds.weights(sched, [0.0], 0.3).w
    np.testing.assert_allclose(w, [0.5, 0.5], atol=1e-15)


def test_weights_match_brute_force(nonaffine3, ve):
    t = 0.5
    alpha, sigma = ve.alpha(t), ve.sigma(t)
    dens = [math.exp(-float((X - alpha * y) @ (X - alpha * y)) / (2 * sigma ** 2)) for y in nonaffine3.points]
    expected = np.array(dens) / sum(dens)
    w = nonaffine3.weights(ve, X, t).w
    np.testing.assert_allclose(w, expected, rtol=1e-12)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)


def test_weights_survive_underflow(nonaffine3):
    sched = NoiseSchedule(kind=ScheduleKind.EDM)
    w = nonaffine3.weights(sched, [40.0, -25.0], sched.t_min).w
    assert np.all(np.isfinite(w))
    assert w.sum() == pytest.approx(1.0, abs=1e-12)


def test_density_integrates_to_one(nonaffine3, vp):
    t = 0.3
    grid = np.linspace(-6.0, 6.0, 241)
    vals = np.array([[math.exp(nonaffine3.log_density(vp, [a, b], t)) for b in grid] for a in grid])
    mass = trapezoid(trapezoid(vals, grid, axis=1), grid)
    assert mass == pytest.approx(1.0, abs=1e-3)


def test_density_symmetry(symmetric_pair, vp):
    x = np.array([0.25, -0.6])
    assert symmetric_pair.log_density(vp, x, 0.4) == pytest.approx(symmetric_pair.log_density(vp, -x, 0.4), rel=1e-13)


# ==================== SCORE / MOMENTS ====================

def test_symmetric_oracles_at_origin(symmetric_pair, vp):
    np.testing.assert_allclose(symmetric_pair.score(vp, [0.0, 0.0], 0.5), 0.0, atol=1e-14)
    np.testing.assert_allclose(symmetric_pair.y_oracle(vp, [0.0, 0.0], 0.5), 0.0, atol=1e-15)
    assert symmetric_pair.t_oracle(vp, [1.3, -0.2], 0.5) == pytest.approx(0.2 / 2, rel=1e-12)


def test_single_point_oracles(single_point, sched):
    x, t = np.array([0.8, -1.1]), 0.5 * sched.T
    y = single_point.points[0]
    alpha, sigma = sched.alpha(t), sched.sigma(t)
    np.testing.assert_allclose(single_point.score(sched, x, t), -(x - alpha * y) / sigma ** 2, rtol=1e-12)
    np.testing.assert_allclose(single_point.y_oracle(sched, x, t), y)
    assert single_point.t_oracle(sched, x, t) == pytest.approx(float(y @ y) / 2, rel=1e-12)
    fisher = single_point.fisher_matrix(sched, x, t)
    np.testing.assert_allclose(fisher.matrix, np.eye(2) / sigma ** 2, rtol=1e-12, atol=1e-12)
    assert single_point.fisher_trace(sched, x, t) == pytest.approx(2 / sigma ** 2, rel=1e-12)


def test_t_oracle_three_points(nonaffine3, ve):
    w = nonaffine3.weights(ve, X, 0.5).w
    expected = float(w @ np.array([0.25, 0.0, 0.25])) / 2
    assert nonaffine3.t_oracle(ve, X, 0.5) == pytest.approx(expected, rel=1e-12)


def test_y_oracle_score_consistency(nonaffine3, sched):
    for x, t in diffused_points(nonaffine3, sched, 50, seed=1, t_low=0.05):
        alpha, sigma = sched.alpha(t), sched.sigma(t)
        residual = (x - alpha * nonaffine3.y_oracle(sched, x, t)) / sigma ** 2 + nonaffine3.score(sched, x, t)
        assert np.max(np.abs(residual)) <= 1e-12 * max(1.0, np.max(np.abs(x)) / sigma ** 2)


def test_one_dimensional_pair_fisher():
    a = 0.6
    ds = DiracDataset(points=[[a], [-a]])
    sched = NoiseSchedule(kind=ScheduleKind.VP)
    t = 0.4
    alpha, sigma = sched.alpha(t), sched.sigma(t)
    expected = 1 / sigma ** 2 - alpha ** 2 * a ** 2 / sigma ** 4
    assert ds.fisher_matrix(sched, [0.0], t).matrix[0, 0] == pytest.approx(expected, rel=1e-12)
    assert ds.fisher_trace(sched, [0.0], t) == pytest.approx(expected, rel=1e-12)


def test_posterior_covariance_is_psd(nonaffine3, sched):
    for x, t in diffused_points(nonaffine3, sched, 30, seed=2):
        cov = nonaffine3.posterior_cov(sched, x, t)
        np.testing.assert_array_equal(cov, cov.T)
        assert np.min(np.linalg.eigvalsh(cov)) >= -1e-10


def test_identical_points_act_as_single(sched):
    ds = DiracDataset(points=[[0.3, -0.2]] * 4)
    single = DiracDataset(points=[[0.3, -0.2]])
    x, t = np.array([0.5, 0.1]), 0.3 * sched.T
    np.testing.assert_allclose(ds.fisher_matrix(sched, x, t).matrix, single.fisher_matrix(sched, x, t).matrix,
                               rtol=1e-12, atol=1e-12)
    assert ds.log_density(sched, x, t) == pytest.approx(single.log_density(sched, x, t), rel=1e-12)


# ==================== FINITE-DIFFERENCE ORACLE CHECKS ====================

@pytest.mark.parametrize('name', ['single_point', 'symmetric_pair', 'nonaffine3'])
def test_oracles_match_finite_differences(name, sched, request):
    law = request.getfixturevalue(name)
    # VE is far more concentrated at small t; keep its check window where FD is well conditioned
    t_low = 0.4 if sched.kind == ScheduleKind.VE else 0.2
    for x, t in diffused_points(law, sched, 17, seed=3, t_low=t_low):
        check = check_point(law, sched, x, t)
        assert check.score_rel_error <= 1e-4
        assert check.hessian_abs_error <= 1e-3
        assert check.passed


def test_algebraic_identities(nonaffine3, sched):
    for x, t in diffused_points(nonaffine3, sched, 250, seed=4, t_low=0.01):
        check = check_point(nonaffine3, sched, x, t)
        assert check.trace_identity_error <= 1e-10
        assert check.df_tm_error <= 1e-10


def test_fd_hessian_of_polynomial():
    def fn(z):
        return z[0] ** 2 * z[1] + 3.0 * z[0] * z[1] - z[1] ** 2

    np.testing.assert_allclose(fd_hessian(fn, np.array([0.5, -1.0]), 1e-4), [[-2.0, 4.0], [4.0, -2.0]], atol=1e-6)


class _TiltedDensity(DiracDataset):
    """log_density off by 0.05 * x0^2 while score and Fisher stay exact."""

    def log_density(self, sched, x, t):
        return super().log_density(sched, x, t) + 0.05 * float(np.asarray(x)[0] ** 2)


def test_hessian_check_uses_log_density(vp):
    check = check_point(_TiltedDensity(points=NONAFFINE3), vp, [0.2, 0.1], 0.5)
    assert check.hessian_abs_error == pytest.approx(0.1, rel=1e-2)
    assert not check.passed


def test_fisher_matrix_symmetric(nonaffine3, vp):
    for x, t in diffused_points(nonaffine3, vp, 20, seed=5):
        fisher = nonaffine3.fisher_matrix(vp, x, t)
        np.testing.assert_array_equal(fisher.matrix, fisher.matrix.T)
        assert fisher.trace == pytest.approx(np.trace(fisher.matrix), abs=1e-10)


def test_domain_errors(nonaffine3, vp):
    with pytest.raises(DomainError):
        nonaffine3.score(vp, [0.0, 0.0], 0.0)
    with pytest.raises(DomainError):
        nonaffine3.score(vp, [0.0, 0.0, 0.0], 0.5)
    with pytest.raises(DomainError):
        nonaffine3.score(vp, [np.nan, 0.0], 0.5)
    with pytest.raises(DomainError):
        DiracDataset(points=np.empty((0, 2)))
    with pytest.raises(DomainError):
        DiracDataset(points=[[0.0, np.inf]])


# ==================== GAUSSIAN ====================

def test_gaussian_identity_cov(gaussian, sched):
    t = 0.5 * sched.T
    alpha, sigma = sched.alpha(t), sched.sigma(t)
    np.testing.assert_allclose(gaussian.gaussian_fisher(sched, t).matrix, np.eye(2) / (alpha ** 2 + sigma ** 2),
                               rtol=1e-12, atol=1e-15)


def test_gaussian_vp_fisher_is_identity(gaussian, vp):
    np.testing.assert_allclose(gaussian.gaussian_fisher(vp, 0.37).matrix, np.eye(2), atol=1e-12)


def test_gaussian_density_matches_scipy(skewed_gaussian, vp):
    t, x = 0.3, np.array([0.4, -0.9])
    alpha, sigma = vp.alpha(t), vp.sigma(t)
    cov = alpha ** 2 * skewed_gaussian.cov + sigma ** 2 * np.eye(2)
    expected = multivariate_normal(alpha * skewed_gaussian.mean, cov).logpdf(x)
    assert skewed_gaussian.log_density(vp, x, t) == pytest.approx(expected, rel=1e-12)
    np.testing.assert_allclose(skewed_gaussian.score(vp, x, t),
                               -np.linalg.solve(cov, x - alpha * skewed_gaussian.mean), rtol=1e-10)


def test_gaussian_oracles_match_finite_differences(skewed_gaussian, sched):
    for x, t in diffused_points(skewed_gaussian, sched, 20, seed=6):
        assert check_point(skewed_gaussian, sched, x, t).passed


def test_gaussian_dirac_convergence(skewed_gaussian, vp):
    t, x = 0.1, np.array([0.3, -0.2])
    target = skewed_gaussian.gaussian_fisher(vp, t).matrix
    errors = []
    for n in (100, 1000, 10000):
        per_seed = []
        for seed in range(20):
            ds = skewed_gaussian.as_dirac(n, np.random.default_rng(seed))
            per_seed.append(np.linalg.norm(ds.fisher_matrix(vp, x, t).matrix - target))
        errors.append(np.mean(per_seed))
    assert errors[0] > errors[1] > errors[2]


def test_gaussian_validation():
    with pytest.raises(DomainError):
        GaussianInitial(mean=[0.0, 0.0], cov=[[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(DomainError):
        GaussianInitial(mean=[0.0, 0.0], cov=[[1.0, 0.5], [0.4, 1.0]])
    with pytest.raises(DomainError):
        GaussianInitial(mean=[0.0, 0.0], cov=np.eye(3))


def test_make_law():
    assert isinstance(make_law(points=[[0.0, 1.0]]), DiracDataset)
    assert isinstance(make_law(mean=[0.0], cov=[[2.0]]), GaussianInitial)
    with pytest.raises(DomainError):
        make_law()


# ==================== DATASET FILES ====================

def test_dataset_csv(tmp_path, nonaffine3):
    path = str(tmp_path / 'points.csv')
    nonaffine3.to_csv(path)
    loaded = DiracDataset.from_csv(path)
    np.testing.assert_array_equal(loaded.points, nonaffine3.points)
    assert loaded.D_y == nonaffine3.D_y == pytest.approx(0.5)


def test_dataset_csv_errors(tmp_path):
    bad = tmp_path / 'bad.csv'
    bad.write_text('a,b\n1,2\n')
    with pytest.raises(ConfigError):
        DiracDataset.from_csv(str(bad))
    with pytest.raises(ConfigError):
        DiracDataset.from_csv(str(tmp_path / 'missing.csv'))
