"""Adjoint ODE with pluggable Fisher operators, finite-difference oracle and guided sampling.

    d lambda / dt = -[ f(t) lambda + (g^2(t) / 2) F_t(x_t)^T lambda ]

integrated from t_min up to the start of a stored trajectory. The Euler update uses the
operator at the upper grid point of each interval, which makes it the exact gradient of
the Euler PF-ODE map.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, List, Optional

import numpy as np

from src.diffusion.schedules import NoiseSchedule
from src.fisher.access import ExactProvider, ScoreProvider, df_ea_apply, vjp_apply
from src.ode.solvers import Trajectory, integrate_euler, pf_ode_solve, pf_velocity
from src.utils.csv_io import write_csv
from src.utils.errors import ConfigError, DomainError, IntegrationError
from src.utils.parallel import ordered_map

logger = logging.getLogger(__name__)

DEFAULT_GUIDANCE_STRENGTH = 0.2


class OperatorKind(str, Enum):
    EXACT = 'exact'
    VJP = 'vjp'
    DF_EA = 'df_ea'

    @classmethod
    def parse(cls, value) -> 'OperatorKind':
        """Accept enum members and CLI spellings ('df-ea')."""
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower().replace('-', '_'))
        except ValueError:
            raise ConfigError(f"Unknown adjoint operator {value!r}") from None


@dataclass(frozen=True, eq=False)
class AdjointState:
    """Adjoint vector paired with the trajectory state at the same time."""

    lam: np.ndarray
    t: float
    x: np.ndarray


def quadratic_loss(x0: np.ndarray, x_ref: np.ndarray) -> float:
    """L(x0) = 0.5 |x0 - x_ref|^2."""
    diff = np.asarray(x0) - np.asarray(x_ref)
    return 0.5 * float(diff @ diff)


def fisher_operator(op_kind, sp: ScoreProvider, sched: NoiseSchedule,
                    trajectory: Trajectory) -> Callable[[np.ndarray, float, np.ndarray], np.ndarray]:
    """
    The F^T lambda product used by the adjoint.

    Args:
        op_kind: exact, vjp or df_ea
        sp: Score provider (exact requires an ExactProvider)
        sched: Schedule
        trajectory: Trajectory the adjoint runs along (df_ea takes its endpoint)

    Returns:
        op(x, t, lam) -> (d,)
    """
    kind = OperatorKind.parse(op_kind)
    if kind == OperatorKind.EXACT:
        if not isinstance(sp, ExactProvider):
            raise ConfigError("op=exact needs an exact provider")
        return lambda x, t, lam: sp.law.fisher_matrix(sched, x, t).matrix @ lam
    if kind == OperatorKind.VJP:
        return lambda x, t, lam: vjp_apply(sp, x, t, lam)
    # denoised endpoint of the trajectory
    x0 = sp.y_pred(trajectory.x_end, trajectory.times[-1])
    return lambda x, t, lam: df_ea_apply(x0, sp.y_pred(x, t), lam, sched, t)


def adjoint_solve(op_kind, sp: ScoreProvider, sched: NoiseSchedule, trajectory: Trajectory,
                  grad_L_at_x0) -> List[AdjointState]:
    """
    Propagate dL/dx_end back along a stored trajectory.

    Args:
        op_kind: exact, vjp or df_ea
        sp: Score provider the trajectory was generated with
        sched: Schedule
        trajectory: Output of pf_ode_solve (or integrate_euler)
        grad_L_at_x0: Loss gradient at the trajectory end (d,)

    Returns:
        AdjointStates ordered from the trajectory end (t_min) up to its start
    """
    grad = np.array(grad_L_at_x0, dtype=float, copy=True)
    if grad.shape != (trajectory.d,) or not np.all(np.isfinite(grad)):
        raise DomainError(f"grad must be a finite vector of length {trajectory.d}")
    if trajectory.d != sp.d:
        raise DomainError(f"trajectory dimension {trajectory.d} != provider dimension {sp.d}")
    times, states = trajectory.times, trajectory.states
    sched.check_time(times)
    op = fisher_operator(op_kind, sp, sched, trajectory)

    lam = grad
    out = [AdjointState(lam=lam, t=float(times[-1]), x=states[-1])]
    for j in range(len(times) - 2, -1, -1):
        t = times[j]
        h = t - times[j + 1]
        lam = lam - h * (sched.drift_coeff(t) * lam + 0.5 * sched.diffusion_coeff_sq(t) * op(states[j], t, lam))
        if not np.all(np.isfinite(lam)):
            raise IntegrationError(f"non-finite adjoint state at t={t:.6g}", step=len(times) - 1 - j)
        out.append(AdjointState(lam=lam, t=float(t), x=states[j]))
    return out


def adjoint_to_csv(path: str, states: List[AdjointState]) -> str:
    """Dump as step,t,x0..x{d-1},l0..l{d-1} (step 0 = trajectory end)."""
    d = states[0].lam.size
    columns = ['step', 't'] + [f"x{j}" for j in range(d)] + [f"l{j}" for j in range(d)]
    rows = ([k, s.t, *s.x, *s.lam] for k, s in enumerate(states))
    return write_csv(path, columns, rows)


def flow_grad_fd(sp: ScoreProvider, sched: NoiseSchedule, x_T, steps: int, x_ref,
                 h: float = 1e-5, threads: Optional[int] = None) -> np.ndarray:
    """
    Central-difference gradient of 0.5 |x0(x_T) - x_ref|^2 w.r.t. x_T.

    Every partial re-integrates the PF-ODE twice.

    Args:
        sp: Score provider
        sched: Schedule
        x_T: Terminal state (d,)
        steps: Euler steps
        x_ref: Loss target (d,)
        h: Finite-difference step
        threads: Worker cap for the 2d re-integrations

    Returns:
        (d,) gradient
    """
    x_T = np.asarray(x_T, dtype=float)
    x_ref = np.asarray(x_ref, dtype=float)
    d = x_T.size
    shifts = [s * h * e for e in np.eye(d) for s in (1.0, -1.0)]
    losses = ordered_map(
        lambda dx: quadratic_loss(pf_ode_solve(sp, sched, x_T + dx, steps).x_end, x_ref),
        shifts,
        threads=threads
    )
    losses = np.asarray(losses).reshape(d, 2)
    return (losses[:, 0] - losses[:, 1]) / (2.0 * h)


# ==================== GUIDED SAMPLING ====================

@dataclass(frozen=True, eq=False)
class GuidedResult:
    """Guided PF-ODE sample."""

    trajectory: Trajectory
    loss: float
    n_guided: int


def default_guidance_steps(steps: int) -> range:
    """Middle band of the schedule: steps from 30% to 70% of the run."""
    return range(int(0.3 * steps), int(0.7 * steps))


def guided_sample(
    sp: ScoreProvider,
    sched: NoiseSchedule,
    x_T,
    steps: int,
    x_ref,
    op_kind='df_ea',
    guidance_steps: Optional[Iterable[int]] = None,
    eta: float = DEFAULT_GUIDANCE_STRENGTH
) -> GuidedResult:
    """
    PF-ODE sampling with adjoint guidance toward x_ref.

    At each guided step k the remaining trajectory is solved to t_min, the adjoint of
    0.5 |x0 - x_ref|^2 is carried back to t_k, and x_k moves by -eta * lambda / |lambda|.

    Args:
        sp: Score provider
        sched: Schedule
        x_T: Terminal state
        steps: Euler steps
        x_ref: Loss target
        op_kind: Fisher operator for the adjoint
        guidance_steps: Step indices (0 = T) that get one guidance update each
        eta: Normalized guidance strength

    Returns:
        GuidedResult with the final loss
    """
    if eta < 0:
        raise DomainError(f"eta must be >= 0, got {eta}")
    times = sched.time_grid(steps)
    guided = set(default_guidance_steps(steps) if guidance_steps is None else guidance_steps)
    x_ref = np.asarray(x_ref, dtype=float)
    x = np.array(x_T, dtype=float, copy=True)
    states = np.empty((steps + 1, x.size))
    n_guided = 0

    for k in range(steps):
        if k in guided:
            inner = integrate_euler(sp, sched, x, times[k:])
            lam = adjoint_solve(op_kind, sp, sched, inner, inner.x_end - x_ref)[-1].lam
            norm = float(np.linalg.norm(lam))
            if norm > 0:
                x = x - eta * lam / norm
                n_guided += 1
        states[k] = x
        x = x + (times[k + 1] - times[k]) * pf_velocity(sp, sched, x, times[k])
        if not np.all(np.isfinite(x)):
            raise IntegrationError("non-finite guided state", step=k + 1)
    states[steps] = x

    trajectory = Trajectory(times=times, states=states)
    return GuidedResult(trajectory=trajectory, loss=quadratic_loss(x, x_ref), n_guided=n_guided)
