"""Test the fundamental-matrix OT check and its experiment reports."""

import math

import numpy as np
import pytest

from src.training.datasets import builtin_law
from src.ot.experiment import (
    NOT_OT_CONSISTENT, OT_CONSISTENT, REPORT_COLUMNS, OTConfig, compare_variants, convergence_in_m,
    ot_experiment
)
from src.ot.fundamental import asymmetry_rate, b_matrix, fundamental_solve, spd_check
from src.utils.csv_io import read_csv, read_json
from src.utils.errors import ConfigError, DomainError


# ==================== DIAGNOSTICS ====================

def test_asymmetry_rate():
    assert asymmetry_rate(np.eye(3)) == 0.0
    assert asymmetry_rate([[1.0, 1.0], [0.0, 1.0]]) == pytest.approx(math.sqrt(2.0) / math.sqrt(6.0), rel=1e-12)
    assert asymmetry_rate([[1.0, 2.0], [0.0, 1.0]]) == pytest.approx(2.0 / math.sqrt(6.0), rel=1e-12)
    assert asymmetry_rate([[0.0, 1.0], [-1.0, 0.0]]) == pytest.approx(math.sqrt(2.0), rel=1e-12)
    with pytest.raises(DomainError):
        asymmetry_rate(np.zeros((2, 2)))


def test_spd_check():
    ok, eig = spd_check(np.diag([2.0, 0.5]))
    assert ok and eig == pytest.approx(0.5)
    ok, eig = spd_check(np.diag([1.0, -1.0]))
    assert not ok and eig == pytest.approx(-1.0)
    assert spd_check([[1.0, 4.0], [-4.0, 1.0]])[0]


def test_b_matrix_symmetric(nonaffine3, sched):
    rng = np.random.default_rng(0)
    for t in np.linspace(0.05, 1.0, 8) * sched.T:
        B = b_matrix(nonaffine3, sched, rng.uniform(-1.0, 1.0, size=2), t)
        np.testing.assert_array_equal(B, B.T)


def test_b_matrix_single_point(single_point, vp):
    t = 0.4
    expected = vp.drift_coeff(t) - vp.diffusion_coeff_sq(t) / (2.0 * vp.sigma(t) ** 2)
    np.testing.assert_allclose(b_matrix(single_point, vp, [0.1, 0.1], t), expected * np.eye(2), atol=1e-12)


# ==================== FUNDAMENTAL MATRIX ====================

def test_stop_at_T_is_identity(nonaffine3, vp):
    fm, traj = fundamental_solve(nonaffine3, vp, [0.3, 0.4], M=10, s=vp.T)
    np.testing.assert_array_equal(fm.A, np.eye(2))
    assert fm.asym == 0.0
    assert fm.min_eig_sym == pytest.approx(1.0)
    assert traj.steps == 0


def test_single_point_stays_scalar(single_point, sched):
    fm, traj = fundamental_solve(single_point, sched, [0.5, -0.5], M=200)
    assert fm.asym <= 1e-14
    assert fm.min_eig_sym > 0
    assert fm.A[0, 0] == pytest.approx(fm.A[1, 1], rel=1e-12)
    assert fm.s == sched.t_min
    assert traj.times[-1] == sched.t_min


def test_fundamental_solve_validation(nonaffine3, vp):
    with pytest.raises(DomainError):
        fundamental_solve(nonaffine3, vp, [0.0, 0.0], M=0)
    with pytest.raises(DomainError):
        fundamental_solve(nonaffine3, vp, [0.0, 0.0], s=2.0)
    with pytest.raises(DomainError):
        fundamental_solve(nonaffine3, vp, [0.0, 0.0, 0.0])


def test_result_matrix_is_read_only(nonaffine3, vp):
    fm, _ = fundamental_solve(nonaffine3, vp, [0.3, 0.4], M=20)
    with pytest.raises(ValueError):
        fm.A[0, 0] = 5.0


# ==================== OT EXPERIMENT ====================

@pytest.mark.parametrize('data', ['gaussian', 'affine3'])
def test_affine_laws_are_ot_consistent(data, experiment_sched):
    report = ot_experiment(builtin_law(data), experiment_sched, OTConfig(M=1000, n_traj=16))
    assert len(report.chains) == 16
    assert report.max_asym <= 1e-6
    assert report.min_eig >= -1e-8
    assert report.verdict == OT_CONSISTENT


def test_nonaffine_law_breaks_symmetry(experiment_sched):
    report = ot_experiment(builtin_law('nonaffine3'), experiment_sched, OTConfig(M=1000, n_traj=16))
    assert report.max_asym >= 0.05
    assert report.verdict == NOT_OT_CONSISTENT


def test_stop_time_defaults(gaussian, nonaffine3, vp):
    cfg = OTConfig(M=10, n_traj=1)
    assert cfg.stop_time(gaussian) == 0.1
    assert cfg.stop_time(nonaffine3) == 0.0
    assert ot_experiment(nonaffine3, vp, cfg).s == vp.t_min
    assert OTConfig(s=0.5).stop_time(gaussian) == 0.5


def test_ot_config_validation():
    with pytest.raises(ConfigError):
        OTConfig(M=0)
    with pytest.raises(ConfigError):
        OTConfig(n_traj=0)
    with pytest.raises(ConfigError):
        OTConfig(sym_tol=-1.0)


def test_chains_independent_of_threads(nonaffine3, vp):
    cfg = OTConfig(M=100, n_traj=6, seed=3)
    assert ot_experiment(nonaffine3, vp, cfg, threads=1).chains == ot_experiment(nonaffine3, vp, cfg, threads=4).chains


def test_transpose_variant_on_isotropic_gaussian(vp):
    reports = compare_variants(builtin_law('gaussian'), vp, OTConfig(M=200, n_traj=4))
    for a, b in zip(reports['default'].chains, reports['transpose'].chains):
        assert a.asym == b.asym
        assert a.min_eig_sym == b.min_eig_sym
    assert reports['transpose'].transpose_variant


def test_asymmetry_converges_in_m(nonaffine3, vp):
    rows = convergence_in_m(nonaffine3, vp, OTConfig(M=1000, n_traj=4))
    assert [r['traj'] for r in rows] == [0, 1, 2, 3]
    coarse = np.mean([r['asym_M'] for r in rows])
    fine = np.mean([r['asym_2M'] for r in rows])
    assert abs(fine - coarse) / coarse < 0.1


def test_report_outputs(tmp_path, nonaffine3, vp):
    report = ot_experiment(nonaffine3, vp, OTConfig(M=50, n_traj=3, seed=2))
    columns, rows = read_csv(report.to_csv(str(tmp_path / 'ot.csv')))
    assert columns == REPORT_COLUMNS
    assert [int(r[0]) for r in rows] == [0, 1, 2]
    assert float(rows[1][2]) == report.chains[1].asym

    payload = read_json(report.to_json(str(tmp_path / 'ot.json'), config_echo={'M': 50}))
    assert payload['verdict'] == report.verdict
    assert payload['n_traj'] == 3
    assert payload['config'] == {'M': 50}
    assert payload['max_asym'] == report.max_asym
    assert report.summary()['schedule'] == 'vp'
