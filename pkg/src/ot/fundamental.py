"""Fundamental matrix of the PF-ODE map and its symmetry / positivity diagnostics.

    B(t, x_t) = [f - g^2 / (2 sigma^2)] I + (alpha^2 g^2 / (2 sigma^4)) Cov[y | x_t]

A starts at I at time T and is co-integrated with the PF-ODE state down to s:

    A <- A + dt A B            (default)
    A <- A + dt A^T B          (transpose_variant)

with dt < 0. A symmetric positive-definite A(s) on every chain is the certificate that
the PF-ODE map is a Monge optimal-transport map.
"""

import math
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import scipy.linalg as sl

from src.diffusion.schedules import NoiseSchedule
from src.fisher.access import ExactProvider
from src.fisher.oracle import InitialLaw
from src.ode.solvers import Trajectory, pf_velocity
from src.utils.errors import DomainError, IntegrationError

logger = logging.getLogger(__name__)


def b_matrix(law: InitialLaw, sched: NoiseSchedule, x, t: float) -> np.ndarray:
    """
    B(t, x) from the posterior covariance of the initial law.

    Args:
        law: DiracDataset or GaussianInitial
        sched: Schedule
        x: State (d,)
        t: Time in [t_min, T]

    Returns:
        Symmetric (d, d) matrix
    """
    t = float(sched.check_time(t))
    alpha, sigma = sched.alpha(t), sched.sigma(t)
    f, g2 = sched.drift_coeff(t), sched.diffusion_coeff_sq(t)
    s2 = sigma * sigma
    cov = law.posterior_cov(sched, x, t)
    B = (f - g2 / (2.0 * s2)) * np.eye(law.d) + (alpha * alpha * g2 / (2.0 * s2 * s2)) * cov
    return 0.5 * (B + B.T)


def asymmetry_rate(A: np.ndarray) -> float:
    """|A - A^T|_F / (sqrt(2) |A|_F)."""
    A = np.asarray(A, dtype=float)
    norm = float(np.linalg.norm(A, 'fro'))
    if norm == 0:
        raise DomainError("asymmetry rate is undefined for the zero matrix")
    return float(np.linalg.norm(A - A.T, 'fro')) / (math.sqrt(2.0) * norm)


def spd_check(A: np.ndarray, eig_tol: float = 1e-8) -> Tuple[bool, float]:
    """
    Positivity of the symmetric part.

    Returns:
        (min eigenvalue of (A + A^T)/2 >= -eig_tol, that eigenvalue)
    """
    A = np.asarray(A, dtype=float)
    eigs = sl.eigh(0.5 * (A + A.T), eigvals_only=True)
    min_eig = float(eigs[0])
    return min_eig >= -eig_tol, min_eig


@dataclass(frozen=True, eq=False)
class FundamentalMatrix:
    """A(s) with its diagnostics."""

    A: np.ndarray
    s: float
    asym: float
    min_eig_sym: float

    @classmethod
    def from_matrix(cls, A: np.ndarray, s: float) -> 'FundamentalMatrix':
        A = np.array(A, dtype=float, copy=True)
        A.setflags(write=False)
        return cls(A=A, s=float(s), asym=asymmetry_rate(A), min_eig_sym=spd_check(A)[1])


def fundamental_solve(
    law: InitialLaw,
    sched: NoiseSchedule,
    x_T,
    M: int = 1000,
    s: float = 0.0,
    transpose_variant: bool = False
) -> Tuple[FundamentalMatrix, Trajectory]:
    """
    Co-integrate the PF-ODE state and the fundamental matrix from T down to s.

    Args:
        law: Initial law (exact oracle score drives the state)
        sched: Schedule
        x_T: Terminal state (d,)
        M: Uniform Euler steps between T and s
        s: Stop time; values below t_min stop at t_min, s = T returns A = I
        transpose_variant: Use A <- A + dt A^T B

    Returns:
        (FundamentalMatrix at s, state Trajectory)
    """
    if M < 1:
        raise DomainError(f"M must be >= 1, got {M}")
    if s > sched.T:
        raise DomainError(f"stop time s={s} exceeds T={sched.T}")
    x = np.array(x_T, dtype=float, copy=True)
    if x.shape != (law.d,) or not np.all(np.isfinite(x)):
        raise DomainError(f"x_T must be a finite vector of length {law.d}")
    stop = max(float(s), sched.t_min)
    if stop >= sched.T:
        return FundamentalMatrix.from_matrix(np.eye(law.d), sched.T), Trajectory(
            times=np.array([sched.T]), states=x[None, :]
        )

    sp = ExactProvider(law, sched)
    times = np.linspace(sched.T, stop, M + 1)
    states = np.empty((M + 1, law.d))
    states[0] = x
    A = np.eye(law.d)
    for k in range(M):
        t = times[k]
        dt = times[k + 1] - t
        B = b_matrix(law, sched, x, t)
        A = A + dt * ((A.T if transpose_variant else A) @ B)
        x = x + dt * pf_velocity(sp, sched, x, t)
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(x))):
            raise IntegrationError("non-finite fundamental matrix", step=k + 1)
        states[k + 1] = x
    return FundamentalMatrix.from_matrix(A, stop), Trajectory(times=times, states=states)
