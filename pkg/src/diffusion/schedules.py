"""Noise schedules (VE, VP, sub-VP, EDM) and their SDE coefficients.

Forward kernel: q(x_t | x_0) = N(alpha_t x_0, sigma_t^2 I), with

    f(t)   = d log alpha_t / dt
    g^2(t) = d sigma_t^2 / dt - 2 f(t) sigma_t^2

All coefficients are closed forms; nothing here differentiates numerically.
Every accessor takes a float or an ndarray of times and returns the same shape.
"""

import logging
from dataclasses import dataclass, asdict
from enum import Enum
from typing import Dict, Union

import numpy as np

from src.utils.errors import ConfigError, DomainError, NumericalError

logger = logging.getLogger(__name__)

TimeLike = Union[float, np.ndarray]

# Relative slack on the [0, T] bounds for times produced by float grids.
_TIME_SLACK = 1e-12

# EDM noise range used by the experiments: sigma reaches 80 at t = 1.
EXPERIMENT_EDM_SCALE = 80.0


class ScheduleKind(str, Enum):
    """Named schedule families."""

    VE = 've'
    VP = 'vp'
    SUBVP = 'subvp'
    EDM = 'edm'


def _out(value: np.ndarray) -> TimeLike:
    return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True)
class NoiseSchedule:
    """
    A continuous-time Gaussian noise schedule.

    Attributes:
        kind: Schedule family
        beta_min: VP / sub-VP linear beta at t=0
        beta_max: VP / sub-VP linear beta at t=1
        sigma_min: VE noise level at t=0
        sigma_max: VE noise level at t=1
        t_min: Lower integration cutoff (> 0, Fisher quantities divide by sigma_t)
        T: Terminal time
        edm_scale: EDM time rescaling, sigma(t) = edm_scale * t
    """

    kind: ScheduleKind = ScheduleKind.VP
    beta_min: float = 0.1
    beta_max: float = 20.0
    sigma_min: float = 0.01
    sigma_max: float = 50.0
    t_min: float = 1e-3
    T: float = 1.0
    edm_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, 'kind', ScheduleKind(self.kind))
        if not self.t_min > 0:
            raise DomainError(f"t_min must be > 0, got {self.t_min}")
        if not self.T > self.t_min:
            raise DomainError(f"T must exceed t_min, got T={self.T}, t_min={self.t_min}")
        if self.kind in (ScheduleKind.VP, ScheduleKind.SUBVP):
            if not 0 < self.beta_min <= self.beta_max:
                raise DomainError(
                    f"need 0 < beta_min <= beta_max, got {self.beta_min}, {self.beta_max}"
                )
        if self.kind == ScheduleKind.VE:
            if not 0 < self.sigma_min < self.sigma_max:
                raise DomainError(
                    f"need 0 < sigma_min < sigma_max, got {self.sigma_min}, {self.sigma_max}"
                )
        if self.kind == ScheduleKind.EDM and not self.edm_scale > 0:
            raise DomainError(f"edm_scale must be > 0, got {self.edm_scale}")

    # ==================== CONSTRUCTION ====================

    @classmethod
    def experiment(cls, kind, **params) -> 'NoiseSchedule':
        """Schedule as the experiments run it: EDM on unit time with sigma_T = 80."""
        kind = ScheduleKind(kind)
        if kind == ScheduleKind.EDM:
            params.setdefault('edm_scale', EXPERIMENT_EDM_SCALE)
        return cls(kind=kind, **params)

    @classmethod
    def from_config(cls, block: Dict) -> 'NoiseSchedule':
        """
        Build a schedule from a config block.

        Args:
            block: Dict with 'kind' and optional schedule parameters

        Returns:
            NoiseSchedule (EDM defaults to the experiment range)
        """
        allowed = {'kind', 'beta_min', 'beta_max', 'sigma_min', 'sigma_max', 't_min', 'T', 'edm_scale'}
        unknown = set(block) - allowed
        if unknown:
            raise ConfigError(f"Unknown schedule keys: {sorted(unknown)}")
        params = dict(block)
        try:
            params['kind'] = ScheduleKind(str(params.get('kind', 'vp')).lower())
        except ValueError:
            raise ConfigError(f"Unknown schedule kind: {block.get('kind')!r}") from None
        for key in allowed - {'kind'}:
            if key in params:
                params[key] = float(params[key])
        try:
            return cls.experiment(**params)
        except DomainError as e:
            raise ConfigError(str(e)) from e

    def to_config(self) -> Dict:
        """Config block echo (inverse of from_config)."""
        block = asdict(self)
        block['kind'] = self.kind.value
        return block

    # ==================== TIME DOMAIN ====================

    def check_time(self, t: TimeLike, allow_zero: bool = False) -> np.ndarray:
        """
        Validate times against the schedule's domain.

        Args:
            t: Time(s)
            allow_zero: Accept [0, T] instead of [t_min, T]

        Returns:
            t as float ndarray
        """
        t = np.asarray(t, dtype=float)
        lower = 0.0 if allow_zero else self.t_min
        slack = _TIME_SLACK * max(self.T, 1.0)
        if not np.all(np.isfinite(t)) or np.any(t < lower - slack) or np.any(t > self.T + slack):
            raise DomainError(f"t={t} outside [{lower}, {self.T}] for {self.kind.value} schedule")
        return np.clip(t, lower, self.T)

    def time_grid(self, steps: int) -> np.ndarray:
        """Uniform decreasing grid T = t_M > ... > t_0 = t_min (steps + 1 points)."""
        if steps < 1:
            raise DomainError(f"steps must be >= 1, got {steps}")
        return np.linspace(self.T, self.t_min, steps + 1)

    # ==================== COEFFICIENTS ====================

    def beta(self, t: TimeLike) -> TimeLike:
        """Linear beta(t) of the VP / sub-VP families."""
        t = self.check_time(t, allow_zero=True)
        return _out(self.beta_min + t * (self.beta_max - self.beta_min))

    def _beta_integral(self, t: np.ndarray) -> np.ndarray:
        return self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t ** 2

    def log_alpha(self, t: TimeLike) -> TimeLike:
        """log alpha_t."""
        t = self.check_time(t, allow_zero=True)
        if self.kind in (ScheduleKind.VP, ScheduleKind.SUBVP):
            return _out(-0.5 * self._beta_integral(t))
        return _out(np.zeros_like(t))

    def alpha(self, t: TimeLike) -> TimeLike:
        """Signal scale alpha_t."""
        return _out(np.exp(np.asarray(self.log_alpha(t))))

    def sigma(self, t: TimeLike) -> TimeLike:
        """Noise scale sigma_t."""
        t = self.check_time(t, allow_zero=True)
        if self.kind == ScheduleKind.VE:
            return _out(self.sigma_min * (self.sigma_max / self.sigma_min) ** t)
        if self.kind == ScheduleKind.EDM:
            return _out(self.edm_scale * t)
        # 1 - alpha^2 via expm1 keeps precision near t = 0
        one_minus_a2 = -np.expm1(-self._beta_integral(t))
        if self.kind == ScheduleKind.VP:
            return _out(np.sqrt(one_minus_a2))
        return _out(one_minus_a2)

    def drift_coeff(self, t: TimeLike) -> TimeLike:
        """f(t) = d log alpha_t / dt."""
        t = self.check_time(t, allow_zero=True)
        if self.kind in (ScheduleKind.VP, ScheduleKind.SUBVP):
            return _out(-0.5 * (self.beta_min + t * (self.beta_max - self.beta_min)))
        return _out(np.zeros_like(t))

    def diffusion_coeff_sq(self, t: TimeLike) -> TimeLike:
        """g^2(t) = d sigma_t^2/dt - 2 f(t) sigma_t^2."""
        t = self.check_time(t, allow_zero=True)
        if self.kind == ScheduleKind.VE:
            sigma = self.sigma_min * (self.sigma_max / self.sigma_min) ** t
            g2 = 2.0 * sigma ** 2 * np.log(self.sigma_max / self.sigma_min)
        elif self.kind == ScheduleKind.EDM:
            g2 = 2.0 * self.edm_scale ** 2 * t
        elif self.kind == ScheduleKind.VP:
            g2 = self.beta_min + t * (self.beta_max - self.beta_min)
        else:
            # beta(t) * (1 - alpha_t^4)
            beta = self.beta_min + t * (self.beta_max - self.beta_min)
            g2 = beta * -np.expm1(-2.0 * self._beta_integral(t))
        if np.any(g2 < 0):
            raise NumericalError(f"negative g^2 for {self.kind.value} schedule at t={t}")
        return _out(g2)

    def stationary_variance(self, data_var: float = 1.0) -> float:
        """
        Per-dimension variance of the Gaussian used as the terminal prior.

        VE / EDM: sigma_T^2. VP / sub-VP: alpha_T^2 * data_var + sigma_T^2.
        """
        if self.kind in (ScheduleKind.VE, ScheduleKind.EDM):
            return float(self.sigma(self.T)) ** 2
        return float(self.alpha(self.T)) ** 2 * data_var + float(self.sigma(self.T)) ** 2

    def describe(self) -> str:
        """One-line summary used in logs and report headers."""
        if self.kind in (ScheduleKind.VP, ScheduleKind.SUBVP):
            params = f"beta=[{self.beta_min}, {self.beta_max}]"
        elif self.kind == ScheduleKind.VE:
            params = f"sigma=[{self.sigma_min}, {self.sigma_max}]"
        else:
            params = f"sigma(t)={self.edm_scale:g}t"
        return f"{self.kind.value}({params}, t in [{self.t_min}, {self.T}])"
