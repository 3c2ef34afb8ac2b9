"""Probability-flow ODE sampling with explicit Euler.

    dx/dt = f(t) x - (g^2(t) / 2) score = f(t) x + (g^2(t) / (2 sigma_t)) eps(x, t)

integrated from T down to t_min on a uniform grid.
"""

import logging
from dataclasses import dataclass

import numpy as np

from src.diffusion.schedules import NoiseSchedule
from src.fisher.access import ScoreProvider
from src.utils.csv_io import write_csv
from src.utils.errors import DomainError, IntegrationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    States of one PF-ODE solve.

    Attributes:
        times: Strictly decreasing times, times[0] = start (T for a full solve)
        states: (len(times), d) states aligned with times
    """

    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        if times.ndim != 1 or len(times) != len(states):
            raise DomainError(f"{len(times)} times for {len(states)} states")
        if len(times) > 1 and np.any(np.diff(times) >= 0):
            raise DomainError("trajectory times must be strictly decreasing")
        if not np.all(np.isfinite(states)):
            raise DomainError("trajectory contains non-finite states")
        object.__setattr__(self, 'times', times)
        object.__setattr__(self, 'states', states)

    @property
    def steps(self) -> int:
        return len(self.times) - 1

    @property
    def d(self) -> int:
        return self.states.shape[1]

    @property
    def x_start(self) -> np.ndarray:
        return self.states[0]

    @property
    def x_end(self) -> np.ndarray:
        """State at the last (smallest) time."""
        return self.states[-1]

    def to_csv(self, path: str) -> str:
        """Dump as step,t,x0,...,x{d-1}."""
        columns = ['step', 't'] + [f"x{j}" for j in range(self.d)]
        rows = ([k, t, *x] for k, (t, x) in enumerate(zip(self.times, self.states)))
        return write_csv(path, columns, rows)


def pf_velocity(sp: ScoreProvider, sched: NoiseSchedule, x: np.ndarray, t: float) -> np.ndarray:
    """Right-hand side of the PF-ODE at (x, t)."""
    return sched.drift_coeff(t) * x + sched.diffusion_coeff_sq(t) / (2.0 * sched.sigma(t)) * sp.eps(x, t)


def integrate_euler(sp: ScoreProvider, sched: NoiseSchedule, x_start, times: np.ndarray) -> Trajectory:
    """
    Explicit Euler along an arbitrary decreasing grid.

    Args:
        sp: Score provider
        sched: Schedule
        x_start: State at times[0]
        times: Decreasing grid inside [t_min, T]

    Returns:
        Trajectory over `times`
    """
    times = np.asarray(times, dtype=float)
    sched.check_time(times)
    x = np.array(x_start, dtype=float, copy=True)
    if x.shape != (sp.d,):
        raise DomainError(f"initial state must have shape ({sp.d},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DomainError("initial state has non-finite entries")
    states = np.empty((len(times), sp.d))
    states[0] = x
    for k in range(len(times) - 1):
        x = x + (times[k + 1] - times[k]) * pf_velocity(sp, sched, x, times[k])
        if not np.all(np.isfinite(x)):
            raise IntegrationError(f"non-finite PF-ODE state at t={times[k + 1]:.6g}", step=k + 1)
        states[k + 1] = x
    return Trajectory(times=times, states=states)


def pf_ode_solve(sp: ScoreProvider, sched: NoiseSchedule, x_T, steps: int) -> Trajectory:
    """
    Sample by integrating the PF-ODE from T to t_min.

    Args:
        sp: Score provider
        sched: Schedule
        x_T: Terminal state (d,)
        steps: Number of uniform Euler steps

    Returns:
        Trajectory with times T = t_M > ... > t_0 = t_min
    """
    return integrate_euler(sp, sched, x_T, sched.time_grid(steps))


def sample_terminal(sched: NoiseSchedule, d: int, n: int, seed: int) -> np.ndarray:
    """x_T ~ N(0, sigma_T^2 I) for n trajectories."""
    rng = np.random.default_rng(seed)
    return sched.sigma(sched.T) * rng.standard_normal(size=(n, d))


def exact_linear_flow(sched: NoiseSchedule, y: np.ndarray, x_T: np.ndarray, t: float) -> np.ndarray:
    """Closed-form PF-ODE state at t for a single data point y: alpha_t y + (sigma_t / sigma_T)(x_T - alpha_T y)."""
    return sched.alpha(t) * y + sched.sigma(t) / sched.sigma(sched.T) * (x_T - sched.alpha(sched.T) * y)
