"""Test the df-lab command line: config resolution, outputs, determinism and exit codes."""

import json
import os

import numpy as np
import pytest

from src.cli.commands import COMMAND_TABLE
from src.cli.config import RunConfig
from src.cli.df_lab import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main
from src.diffusion.schedules import ScheduleKind
from src.training.datasets import load_law
from src.utils.csv_io import csv_body, read_csv, read_json
from src.utils.errors import ConfigError, IntegrationError


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def _config(path, payload):
    path.write_text(json.dumps(payload))
    return str(path)


# ==================== CONFIG ====================

def test_resolve_precedence(workdir):
    path = _config(workdir / 'run.json', {'seed': 5, 'schedule': {'kind': 've', 'sigma_max': 80}, 'n_traj': 3})
    cfg = RunConfig.resolve('ot-test', path, {'seed': 7, 'schedule_kind': 'edm', 'm': None})
    assert cfg.seed == 7
    assert cfg.n_traj == 3
    assert cfg.m == 1000
    sched = cfg.schedule_obj()
    assert sched.kind == ScheduleKind.EDM
    assert sched.sigma_max == 80.0


def test_command_defaults():
    assert RunConfig(command='nll').steps == 1000
    assert RunConfig(command='adjoint-sim').steps == 50
    assert RunConfig(command='ot-test').out == 'ot_test.csv'
    assert RunConfig(command='trace-bench', trace_method='DF-TM').trace_method == 'df_tm'


def test_output_side_paths():
    cfg = RunConfig(command='trace-bench', out='runs/bench.csv')
    assert cfg.sidecar_path() == os.path.join('runs', 'bench.json')
    assert cfg.timing_path() == os.path.join('runs', 'bench.timing.csv')
    assert RunConfig(command='gen-data', out='g.json').sidecar_path() == 'g.config.json'


def test_config_errors(workdir):
    with pytest.raises(ConfigError):
        RunConfig(command='plot')
    with pytest.raises(ConfigError):
        RunConfig.resolve('nll', overrides={'learning_rate': 1.0})
    with pytest.raises(ConfigError):
        RunConfig(command='nll', schedule={'kind': 'cosine'})
    with pytest.raises(ConfigError):
        RunConfig(command='train', train={'epochs': 2})
    with pytest.raises(ConfigError):
        RunConfig(command='train', net='score')


def test_echo_expands_blocks():
    echo = RunConfig(command='train', seed=4).echo()
    assert echo['schedule']['kind'] == 'vp'
    assert echo['train']['seed'] == 4
    assert echo['train']['hidden'] == [64, 64, 64]


# ==================== COMMANDS ====================

def test_gen_data_chessboard(workdir):
    assert main(['gen-data', '--data', 'chessboard', '--n', '100', '--seed', '1', '--out', 'board.csv']) == EXIT_OK
    columns, rows = read_csv('board.csv')
    assert columns == ['x0', 'x1']
    assert len(rows) == 100
    sidecar = read_json('board.json')
    assert sidecar['config']['seed'] == 1
    assert sidecar['summary'] == {'kind': 'chessboard', 'rows': 100, 'd': 2}


def test_gen_data_gaussian_parameters(workdir):
    assert main(['gen-data', '--data', 'gaussian', '--n', '0', '--out', 'g.csv']) == EXIT_OK
    assert not os.path.exists('g.csv')
    law = load_law('g.json')
    assert law.mean.tolist() == [0.5, 0.5]
    assert read_json('g.config.json')['summary']['rows'] == 0


def test_output_dir_from_environment(workdir, monkeypatch):
    monkeypatch.setenv('DF_LAB_OUTPUT_DIR', str(workdir / 'results'))
    assert main(['gen-data', '--data', 'affine3', '--out', 'pts.csv']) == EXIT_OK
    assert os.path.exists(workdir / 'results' / 'pts.csv')
    assert os.path.exists(workdir / 'results' / 'pts.json')


def test_ot_test_summary(workdir):
    assert main(['ot-test', '--data', 'gaussian', '--m', '100', '--n-traj', '4', '--out', 'ot.csv']) == EXIT_OK
    summary = read_json('ot.json')['summary']
    assert summary['verdict'] == 'OT-consistent'
    assert summary['n_traj'] == 4
    assert len(read_csv('ot.csv')[1]) == 4


def test_ot_test_reports_both_variants(workdir):
    argv = ['ot-test', '--data', 'nonaffine3', '--m', '100', '--n-traj', '3', '--transpose-variant', '--out', 'ot.csv']
    assert main(argv) == EXIT_OK
    summary = read_json('ot.json')['summary']
    assert summary['transpose_variant'] is True
    assert set(summary['default']) == {'max_asym', 'min_eig_sym', 'verdict'}
    assert summary['default']['max_asym'] != summary['max_asym']
    assert len(read_csv('ot.csv')[1]) == 3
    assert len(read_csv('ot.default.csv')[1]) == 3


def test_edm_runs_on_the_experiment_range():
    cfg = RunConfig(command='ot-test', schedule={'kind': 'edm'})
    assert cfg.schedule_obj().sigma(1.0) == 80.0


def test_trace_bench_with_oracles(workdir):
    cfg = _config(workdir / 'c.json', {'t_grid': [0.5], 'n_eval_points': 3})
    assert main(['trace-bench', '--config', cfg, '--n-probes', '8', '--out', 'tb.csv']) == EXIT_OK
    columns, rows = read_csv('tb.csv')
    assert columns == ['t', 'method', 'n_points', 'mean_rel_error', 'max_rel_error']
    by_method = {r[1]: float(r[3]) for r in rows}
    assert set(by_method) == {'exact', 'df_tm', 'vjp', 'hutchinson'}
    assert by_method['exact'] == 0.0 and by_method['df_tm'] == 0.0
    assert read_csv('tb.timing.csv')[0] == ['t', 'method', 'seconds', 'seconds_per_eval']


def test_train_then_bench_with_checkpoint(workdir):
    cfg = _config(workdir / 'c.json', {
        't_grid': [0.5], 'n_eval_points': 2, 'n': 200,
        'train': {'n_steps': 20, 'batch_size': 16, 'hidden': [4], 'log_every': 10}
    })
    assert main(['train', '--config', cfg, '--data', 'chessboard', '--out', 'eps.ckpt']) == EXIT_OK
    assert os.path.exists('eps.loss.csv')
    assert 'heldout_loss' in read_json('eps.json')['summary']

    assert main(['trace-bench', '--config', cfg, '--data', 'chessboard', '--eps-net', 'eps.ckpt',
                 '--n-probes', '4', '--out', 'tb.csv']) == EXIT_OK
    assert 'df_tm' not in {r[1] for r in read_csv('tb.csv')[1]}

    # checkpoint trained on VP cannot back a VE run
    assert main(['trace-bench', '--config', cfg, '--data', 'chessboard', '--eps-net', 'eps.ckpt',
                 '--schedule', 've', '--out', 'tb_ve.csv']) == EXIT_CONFIG


def test_nll_from_points_file(workdir):
    pts = workdir / 'x.csv'
    pts.write_text('x0,x1\n0.0,0.5\n0.5,0.0\n')
    assert main(['nll', '--x-csv', str(pts), '--steps', '20', '--terminal', 'exact', '--out', 'nll.csv']) == EXIT_OK
    columns, rows = read_csv('nll.csv')
    assert columns == ['idx', 'x0', 'x1', 'nll', 'bpd', 'nll_10step', 'bpd_10step']
    assert len(rows) == 2


# ==================== DETERMINISM ====================

@pytest.mark.parametrize('argv', [
    ['gen-data', '--data', 'chessboard', '--n', '50'],
    ['fisher-check'],
    ['trace-bench', '--n-probes', '16'],
    ['nll', '--steps', '20', '--trace-method', 'hutchinson', '--n-probes', '8'],
    ['adjoint-sim', '--steps', '10', '--n-traj', '2', '--threads', '2'],
    ['ot-test', '--data', 'nonaffine3', '--m', '50', '--n-traj', '3', '--threads', '3'],
    ['train', '--data', 'nonaffine3'],
], ids=lambda argv: argv[0])
def test_runs_are_reproducible(workdir, argv):
    cfg = _config(workdir / 'small.json', {
        't_grid': [0.5], 'n_eval_points': 3, 'n_points': 3, 'seed': 11,
        'train': {'n_steps': 20, 'batch_size': 16, 'hidden': [4], 'log_every': 10}
    })
    ext = '.ckpt' if argv[0] == 'train' else '.csv'
    assert main(argv + ['--config', cfg, '--out', 'a' + ext]) == EXIT_OK
    assert main(argv + ['--config', cfg, '--out', 'b' + ext]) == EXIT_OK
    if argv[0] == 'train':
        assert (workdir / 'a.ckpt').read_bytes() == (workdir / 'b.ckpt').read_bytes()
        assert csv_body('a.loss.csv') == csv_body('b.loss.csv')
        assert read_json('a.json')['summary'] == read_json('b.json')['summary']
    else:
        assert csv_body('a.csv') == csv_body('b.csv')
    assert read_json('a.json')['config']['seed'] == 11


# ==================== EXIT CODES ====================

def test_exit_codes_for_bad_input(workdir):
    assert main(['nll', '--config', _config(workdir / 'bad.json', {'stepz': 3})]) == EXIT_CONFIG
    assert main(['nll', '--config', str(workdir / 'missing.json')]) == EXIT_CONFIG
    assert main(['ot-test', '--data', str(workdir / 'missing.csv')]) == EXIT_CONFIG
    assert main(['nll', '--tm-net', 'tm.ckpt']) == EXIT_CONFIG
    assert main(['ot-test', '--m', '0']) == EXIT_CONFIG
    assert main(['adjoint-sim', '--config', _config(workdir / 'ref.json', {'x_ref': [1.0, 2.0, 3.0]})]) == EXIT_CONFIG


def test_exit_code_for_numerical_failure(workdir, monkeypatch):
    def diverge(cfg):
        raise IntegrationError("blew up", step=4)

    monkeypatch.setitem(COMMAND_TABLE, 'ot-test', diverge)
    assert main(['ot-test']) == EXIT_NUMERICAL


@pytest.mark.parametrize('error,code', [
    (np.linalg.LinAlgError('Matrix is not positive definite'), EXIT_NUMERICAL),
    (FloatingPointError('overflow encountered in multiply'), EXIT_NUMERICAL),
    (ValueError('array must not contain infs or NaNs'), EXIT_CONFIG),
], ids=['linalg', 'floating-point', 'value'])
def test_exit_codes_for_library_errors(workdir, monkeypatch, error, code):
    def fail(cfg):
        raise error

    monkeypatch.setitem(COMMAND_TABLE, 'nll', fail)
    assert main(['nll']) == code


def test_unknown_command_exits_through_argparse():
    with pytest.raises(SystemExit) as exc:
        main(['plot'])
    assert exc.value.code == 2
