"""Trace-error table: VJP of the epsilon net vs DF-TM, both against the exact trace."""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from src.diffusion.schedules import NoiseSchedule
from src.fisher.access import (
    NetProvider, ScoreProvider, TraceProvider, df_tm_trace, relative_error, summarize_errors, trace_via_vjp
)
from src.fisher.oracle import InitialLaw
from src.training.trainer import diffused_grid
from src.utils.parallel import ordered_map

logger = logging.getLogger(__name__)

TABLE_COLUMNS = ['t', 'n_points', 'vjp_rel_error', 'df_tm_rel_error']


@dataclass(frozen=True)
class TraceRow:
    """Mean relative trace errors at one time."""

    t: float
    n_points: int
    vjp_rel_error: float
    df_tm_rel_error: float

    def as_row(self) -> list:
        return [self.t, self.n_points, self.vjp_rel_error, self.df_tm_rel_error]


def _score_provider(eps_net, sched: NoiseSchedule) -> ScoreProvider:
    return eps_net if isinstance(eps_net, ScoreProvider) else NetProvider(eps_net, sched)


def _trace_provider(tm_net, sp: ScoreProvider) -> TraceProvider:
    if isinstance(tm_net, TraceProvider):
        return tm_net
    return NetProvider(getattr(sp, 'eps_net', tm_net), sp.sched, tm_net=tm_net)


def eval_trace_table(
    eps_net,
    tm_net,
    law: InitialLaw,
    sched: NoiseSchedule,
    t_grid: Sequence[float] = (0.2, 0.4, 0.6, 0.8, 1.0),
    n_eval_points: int = 200,
    seed: int = 0,
    threads: Optional[int] = None,
    show_progress: bool = False
) -> List[TraceRow]:
    """
    Mean relative trace error per time for the VJP baseline and DF-TM.

    Args:
        eps_net: Trained epsilon net or any ScoreProvider
        tm_net: Trained trace net or any TraceProvider
        law: Initial law supplying the exact trace
        sched: Schedule
        t_grid: Evaluation times
        n_eval_points: Diffused samples per time
        seed: Seed for the evaluation points
        threads: Worker cap
        show_progress: Show a tqdm bar

    Returns:
        One TraceRow per entry of t_grid
    """
    sp = _score_provider(eps_net, sched)
    tp = _trace_provider(tm_net, sp)

    xs, ts = diffused_grid(law, sched, list(t_grid), n_eval_points, seed)

    def errors(item):
        x, t = item
        truth = law.fisher_trace(sched, x, t)
        return (
            relative_error(trace_via_vjp(sp, x, t), truth),
            relative_error(df_tm_trace(tp, sp, sched, x, t), truth)
        )

    results = np.array(ordered_map(errors, list(zip(xs, ts)), threads=threads,
                                   desc='trace-table', show_progress=show_progress))
    rows = []
    for k, t in enumerate(t_grid):
        block = results[k * n_eval_points:(k + 1) * n_eval_points]
        rows.append(TraceRow(
            t=float(t),
            n_points=n_eval_points,
            vjp_rel_error=summarize_errors(block[:, 0])[0],
            df_tm_rel_error=summarize_errors(block[:, 1])[0]
        ))
        logger.info(f"📊 t={t:.2f}: VJP {rows[-1].vjp_rel_error:.2%}  DF-TM {rows[-1].df_tm_rel_error:.2%}")
    return rows
