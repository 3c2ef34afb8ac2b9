"""Sub-command implementations. Each takes a RunConfig, writes its outputs and returns a summary dict."""

import os
import time
import logging
from typing import Dict, List, Tuple

import numpy as np

from src.cli.config import RunConfig
from src.fisher.access import (
    ExactProvider, NetProvider, ScoreProvider, TraceProvider, df_tm_trace, relative_error, summarize_errors,
    trace_hutchinson, trace_via_vjp
)
from src.fisher.checks import CHECK_COLUMNS, check_point
from src.fisher.oracle import DiracDataset, GaussianInitial, InitialLaw
from src.ode.adjoint import OperatorKind, adjoint_solve, flow_grad_fd, guided_sample, quadratic_loss
from src.ode.likelihood import TraceMethod, nll_batch
from src.ode.solvers import pf_ode_solve
from src.ot.experiment import chain_seeds, compare_variants, ot_experiment, terminal_states
from src.training.checkpoint import load_checkpoint, save_checkpoint
from src.training.datasets import BUILTIN_NAMES, GAUSSIAN_COV, GAUSSIAN_MEAN, builtin_law, load_law
from src.training.trainer import diffused_grid, evaluate_loss, smoothed, train_eps, train_tm
from src.utils.csv_io import write_csv, write_json
from src.utils.errors import ConfigError, NumericalError
from src.utils.parallel import ordered_map

logger = logging.getLogger(__name__)


# ==================== SHARED ====================

def _law(cfg: RunConfig) -> InitialLaw:
    return load_law(cfg.data, cfg.n, cfg.seed)


def _providers(cfg: RunConfig, law: InitialLaw) -> Tuple[ScoreProvider, TraceProvider]:
    """Exact oracles, or trained nets when checkpoints are configured."""
    sched = cfg.schedule_obj()
    if cfg.eps_net is None:
        if cfg.tm_net is not None:
            raise ConfigError("tm_net needs eps_net as well")
        sp = ExactProvider(law, sched)
        return sp, sp
    eps_model = load_checkpoint(cfg.eps_net)
    tm_model = load_checkpoint(cfg.tm_net) if cfg.tm_net else None
    for model in (eps_model, tm_model):
        if model is not None and model.sched != sched:
            raise ConfigError(f"checkpoint schedule {model.sched.describe()} != run schedule {sched.describe()}")
    net = NetProvider(eps_model, sched, tm_net=tm_model)
    return net, net


def _timed(fn, *args, **kwargs):
    start = time.perf_counter()
    value = fn(*args, **kwargs)
    return value, time.perf_counter() - start


# ==================== COMMANDS ====================

def cmd_gen_data(cfg: RunConfig) -> Dict:
    """Write a dataset CSV (or the Gaussian parameters as JSON when n = 0)."""
    rng = np.random.default_rng(cfg.seed)
    if cfg.data == 'gaussian':
        if cfg.n == 0:
            cfg.out = os.path.splitext(cfg.out)[0] + '.json'
            write_json(cfg.out, {'mean': GAUSSIAN_MEAN, 'cov': GAUSSIAN_COV, 'label': 'gaussian'})
            return {'kind': 'gaussian', 'rows': 0, 'd': GAUSSIAN_MEAN.size}
        law = GaussianInitial(mean=GAUSSIAN_MEAN, cov=GAUSSIAN_COV).as_dirac(cfg.n, rng)
    elif cfg.data in BUILTIN_NAMES:
        law = builtin_law(cfg.data, cfg.n, cfg.seed)
    else:
        law = DiracDataset.from_csv(cfg.data)
    law.to_csv(cfg.out)
    return {'kind': cfg.data, 'rows': law.N, 'd': law.d}


def cmd_fisher_check(cfg: RunConfig) -> Dict:
    """Oracle-vs-finite-difference suite on diffused samples over t_grid."""
    law = _law(cfg)
    sched = cfg.schedule_obj()
    xs, ts = diffused_grid(law, sched, cfg.t_grid, cfg.n_eval_points, cfg.seed)
    checks = ordered_map(lambda item: check_point(law, sched, item[0], item[1]),
                         list(zip(xs, ts)), threads=cfg.threads, desc='fisher-check', show_progress=True)
    rows = [
        [c.t, k, c.score_rel_error, c.hessian_abs_error, c.trace_identity_error, c.df_tm_error, c.passed]
        for k, c in enumerate(checks)
    ]
    write_csv(cfg.out, CHECK_COLUMNS, rows)
    failed = sum(not c.passed for c in checks)
    summary = {'points': len(checks), 'failed': failed}
    if failed:
        raise NumericalError(f"{failed} of {len(checks)} oracle checks failed (see {cfg.out})")
    return summary


def cmd_trace_bench(cfg: RunConfig) -> Dict:
    """exact / df_tm / vjp / hutchinson traces against the oracle, with per-method wall-clock."""
    law = _law(cfg)
    sched = cfg.schedule_obj()
    sp, tp = _providers(cfg, law)
    xs, ts = diffused_grid(law, sched, cfg.t_grid, cfg.n_eval_points, cfg.seed)
    truths = [law.fisher_trace(sched, x, t) for x, t in zip(xs, ts)]

    methods = {
        'exact': lambda k, x, t: law.fisher_trace(sched, x, t),
        'df_tm': lambda k, x, t: df_tm_trace(tp, sp, sched, x, t),
        'vjp': lambda k, x, t: trace_via_vjp(sp, x, t),
        'hutchinson': lambda k, x, t: trace_hutchinson(sp, x, t, cfg.n_probes, rng_seed=cfg.seed + k),
    }
    if isinstance(tp, NetProvider) and tp.tm_net is None:
        logger.warning("⚠️ No trace-matching checkpoint; skipping df_tm")
        del methods['df_tm']

    rows, timing = [], []
    for name, fn in methods.items():
        for t in cfg.t_grid:
            idx = [k for k, tk in enumerate(ts) if tk == float(t)]
            estimates, seconds = _timed(lambda: [fn(k, xs[k], ts[k]) for k in idx])
            errors = [relative_error(e, truths[k]) for e, k in zip(estimates, idx)]
            rows.append([float(t), name, len(idx), *summarize_errors(errors)])
            timing.append([float(t), name, seconds, seconds / len(idx)])
    write_csv(cfg.out, ['t', 'method', 'n_points', 'mean_rel_error', 'max_rel_error'], rows)
    write_csv(cfg.timing_path(), ['t', 'method', 'seconds', 'seconds_per_eval'], timing)
    return {'methods': list(methods), 'points_per_t': cfg.n_eval_points}


def _nll_points(cfg: RunConfig, law: InitialLaw) -> np.ndarray:
    if cfg.x_csv:
        return DiracDataset.from_csv(cfg.x_csv).points
    sched = cfg.schedule_obj()
    xs, _ = diffused_grid(law, sched, [sched.t_min], cfg.n_points, cfg.seed)
    return xs


def cmd_nll(cfg: RunConfig) -> Dict:
    """Per-sample NLL / BPD at the configured step count, plus a 10-step column."""
    law = _law(cfg)
    sched = cfg.schedule_obj()
    sp, tp = _providers(cfg, law)
    xs = _nll_points(cfg, law)
    method = TraceMethod.parse(cfg.trace_method)
    common = dict(trace_method=method, terminal=cfg.terminal, data_var=law.variance_per_dim,
                  n_probes=cfg.n_probes, seed=cfg.seed, threads=cfg.threads)
    full = nll_batch(tp, sp, sched, xs, cfg.steps, show_progress=True, **common)
    coarse = nll_batch(tp, sp, sched, xs, 10, **common)
    columns = ['idx'] + [f"x{j}" for j in range(xs.shape[1])] + ['nll', 'bpd', 'nll_10step', 'bpd_10step']
    rows = [[k, *x, a.nll, a.bpd, b.nll, b.bpd] for k, (x, a, b) in enumerate(zip(xs, full, coarse))]
    write_csv(cfg.out, columns, rows)
    mean_nll = float(np.mean([r.nll for r in full]))
    logger.info(f"📊 mean NLL {mean_nll:.4f} nats ({method.value}, {cfg.steps} steps)")
    return {'points': len(xs), 'mean_nll': mean_nll, 'mean_bpd': float(np.mean([r.bpd for r in full]))}


def cmd_adjoint_sim(cfg: RunConfig) -> Dict:
    """Guided sampling with exact / vjp / df_ea adjoints, scored against a finite-difference gradient."""
    law = _law(cfg)
    sched = cfg.schedule_obj()
    sp, _ = _providers(cfg, law)
    # FD Jacobian products for the VJP baseline when running on oracles
    vjp_sp = ExactProvider(law, sched, analytic=False) if isinstance(sp, ExactProvider) else sp
    ops: List[OperatorKind] = list(OperatorKind) if cfg.op == 'all' else [OperatorKind.parse(cfg.op)]
    x_ref = np.ones(law.d) if cfg.x_ref is None else np.asarray(cfg.x_ref, dtype=float)
    if x_ref.shape != (law.d,):
        raise ConfigError(f"x_ref must have {law.d} entries")
    seeds = chain_seeds(cfg.seed, cfg.n_traj)
    x_Ts = terminal_states(law, sched, seeds)

    def one(k):
        traj = pf_ode_solve(sp, sched, x_Ts[k], cfg.steps)
        fd = flow_grad_fd(sp, sched, x_Ts[k], cfg.steps, x_ref, threads=1)
        out = []
        for op in ops:
            prov = vjp_sp if op == OperatorKind.VJP else sp
            adj, adj_s = _timed(adjoint_solve, op, prov, sched, traj, traj.x_end - x_ref)
            guided, guided_s = _timed(guided_sample, prov, sched, x_Ts[k], cfg.steps, x_ref, op,
                                      cfg.guidance_steps, cfg.eta)
            lam_err = float(np.linalg.norm(adj[-1].lam - fd) / max(np.linalg.norm(fd), 1e-300))
            out.append(([k, seeds[k], op.value, quadratic_loss(traj.x_end, x_ref), guided.loss, lam_err],
                        [k, op.value, adj_s, guided_s]))
        return out

    results = ordered_map(one, range(cfg.n_traj), threads=cfg.threads, desc='adjoint-sim', show_progress=True)
    rows = [r for chain in results for r, _ in chain]
    timing = [tm for chain in results for _, tm in chain]
    write_csv(cfg.out, ['traj', 'seed', 'op', 'unguided_loss', 'guided_loss', 'lambda_rel_error'], rows)
    write_csv(cfg.timing_path(), ['traj', 'op', 'adjoint_seconds', 'guided_seconds'], timing)
    summary = {}
    for op in ops:
        sel = [r for r in rows if r[2] == op.value]
        summary[op.value] = {
            'mean_guided_loss': float(np.mean([r[4] for r in sel])),
            'mean_lambda_rel_error': float(np.mean([r[5] for r in sel])),
        }
    return summary


def cmd_ot_test(cfg: RunConfig) -> Dict:
    """
    Fundamental-matrix OT test over sampled chains.

    With transpose_variant the default update is run on the same chains as well; its
    chains go to <stem>.default.csv and its aggregate under 'default' in the summary.
    """
    law = _law(cfg)
    sched = cfg.schedule_obj()
    if not cfg.transpose_variant:
        report = ot_experiment(law, sched, cfg.ot_config(), threads=cfg.threads, show_progress=True)
        report.to_csv(cfg.out)
        return report.summary()

    reports = compare_variants(law, sched, cfg.ot_config(), threads=cfg.threads)
    reports['transpose'].to_csv(cfg.out)
    reports['default'].to_csv(f"{os.path.splitext(cfg.out)[0]}.default.csv")
    summary = reports['transpose'].summary()
    default = reports['default']
    summary['default'] = {'max_asym': default.max_asym, 'min_eig_sym': default.min_eig, 'verdict': default.verdict}
    return summary


def cmd_train(cfg: RunConfig) -> Dict:
    """Train the eps or tm head and write a checkpoint plus a smoothed loss curve."""
    law = _law(cfg)
    if isinstance(law, GaussianInitial):
        law = law.as_dirac(cfg.n, np.random.default_rng(cfg.seed))
    sched = cfg.schedule_obj()
    train = train_eps if cfg.net == 'eps' else train_tm
    result = train(law, sched, cfg.train_config())
    save_checkpoint(result.net, cfg.out)
    curve = smoothed(result.losses, 100)
    write_csv(f"{os.path.splitext(cfg.out)[0]}.loss.csv", ['window', 'mean_loss'],
              ([k, v] for k, v in enumerate(curve)))
    return {
        'net': cfg.net,
        'final_loss': result.final_loss,
        'heldout_loss': evaluate_loss(result.net, law, sched, seed=cfg.seed + 1),
    }


COMMAND_TABLE = {
    'gen-data': cmd_gen_data,
    'fisher-check': cmd_fisher_check,
    'trace-bench': cmd_trace_bench,
    'nll': cmd_nll,
    'adjoint-sim': cmd_adjoint_sim,
    'ot-test': cmd_ot_test,
    'train': cmd_train,
}
