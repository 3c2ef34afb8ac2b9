"""Finite-difference verification of the exact oracles."""

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from src.diffusion.schedules import NoiseSchedule
from src.fisher.access import ExactProvider, df_tm_trace
from src.fisher.oracle import InitialLaw

logger = logging.getLogger(__name__)

SCORE_RTOL = 1e-4
HESSIAN_ATOL = 1e-3
IDENTITY_RTOL = 1e-10

# Finite-difference steps relative to sigma_t.
FD_REL_STEP = 1e-5
HESSIAN_REL_STEP = 1e-4

CHECK_COLUMNS = ['t', 'point', 'score_rel_error', 'hessian_abs_error', 'trace_identity_error',
                 'df_tm_error', 'passed']


def fd_gradient(fn: Callable[[np.ndarray], float], x: np.ndarray, h: float) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for j, e in enumerate(np.eye(x.size)):
        grad[j] = (fn(x + h * e) - fn(x - h * e)) / (2.0 * h)
    return grad


def fd_hessian(fn: Callable[[np.ndarray], float], x: np.ndarray, h: float) -> np.ndarray:
    """
    Central second-difference Hessian of a scalar function.

    Diagonal: (f(x+he) - 2f(x) + f(x-he)) / h^2. Off-diagonal: the four-point
    stencil (f(++) - f(+-) - f(-+) + f(--)) / 4h^2.
    """
    x = np.asarray(x, dtype=float)
    d = x.size
    eye = np.eye(d)
    f0 = fn(x)
    hess = np.empty((d, d))
    for i in range(d):
        hess[i, i] = (fn(x + h * eye[i]) - 2.0 * f0 + fn(x - h * eye[i])) / h ** 2
        for j in range(i):
            ei, ej = h * eye[i], h * eye[j]
            mixed = fn(x + ei + ej) - fn(x + ei - ej) - fn(x - ei + ej) + fn(x - ei - ej)
            hess[i, j] = hess[j, i] = mixed / (4.0 * h ** 2)
    return hess


@dataclass(frozen=True)
class FisherCheck:
    """Oracle-vs-finite-difference errors at one (x, t)."""

    t: float
    score_rel_error: float
    hessian_abs_error: float
    trace_identity_error: float
    df_tm_error: float

    @property
    def passed(self) -> bool:
        return (
            self.score_rel_error <= SCORE_RTOL
            and self.hessian_abs_error <= HESSIAN_ATOL
            and self.trace_identity_error <= IDENTITY_RTOL
            and self.df_tm_error <= IDENTITY_RTOL
        )


def check_point(law: InitialLaw, sched: NoiseSchedule, x, t: float) -> FisherCheck:
    """
    Compare score, Fisher matrix and traces at (x, t) against finite differences.

    Steps scale with sigma_t so the check stays meaningful at small noise levels.
    Score error is |score - fd| / max(|fd|, 1); the two trace identities are measured
    relative to d / sigma_t^2 + (alpha_t^2 / sigma_t^4) * d * t_oracle.

    Args:
        law: Initial law
        sched: Schedule
        x: Point (d,)
        t: Time

    Returns:
        FisherCheck
    """
    x = np.asarray(x, dtype=float)
    alpha, sigma = sched.alpha(t), sched.sigma(t)

    score = law.score(sched, x, t)
    fd_score = fd_gradient(lambda z: law.log_density(sched, z, t), x, FD_REL_STEP * sigma)
    score_err = float(np.linalg.norm(score - fd_score) / max(np.linalg.norm(fd_score), 1.0))

    fisher = law.fisher_matrix(sched, x, t)
    # F = -Hessian of log q_t
    fd_hess = fd_hessian(lambda z: law.log_density(sched, z, t), x, HESSIAN_REL_STEP * sigma)
    hess_err = float(np.max(np.abs(fisher.matrix + fd_hess)))

    trace = law.fisher_trace(sched, x, t)
    scale = law.d / sigma ** 2 + alpha ** 2 / sigma ** 4 * law.d * law.t_oracle(sched, x, t)
    identity_err = abs(trace - fisher.trace) / scale
    sp = ExactProvider(law, sched)
    tm_err = abs(df_tm_trace(sp, sp, sched, x, t) - trace) / scale

    return FisherCheck(
        t=float(t),
        score_rel_error=score_err,
        hessian_abs_error=hess_err,
        trace_identity_error=float(identity_err),
        df_tm_error=float(tm_err)
    )
