"""Exact diffusion Fisher oracles for Dirac-mixture and single-Gaussian initial data.

For q_0 = (1/N) sum_i delta(y_i) the diffused density is a Gaussian mixture and

    v_i = exp(-|x - alpha_t y_i|^2 / (2 sigma_t^2)),   w_i = v_i / sum_j v_j
    F_t(x) = I / sigma_t^2 - alpha_t^2 / sigma_t^4 * [sum_i w_i y_i y_i^T - ybar ybar^T]

with ybar = sum_i w_i y_i. The bracket is the posterior covariance of y given x_t,
which also gives the Gaussian case its closed form.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sl
from scipy.special import logsumexp, softmax

from src.diffusion.schedules import NoiseSchedule
from src.utils.csv_io import read_csv, write_csv
from src.utils.errors import ConfigError, DomainError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SoftWeights:
    """Posterior weights of the data points given (x_t, t)."""

    log_v: np.ndarray
    w: np.ndarray


@dataclass(frozen=True)
class FisherEval:
    """Symmetric Fisher matrix and its trace."""

    matrix: np.ndarray
    trace: float


def trace_from_moments(
    sched: NoiseSchedule,
    t: float,
    d: int,
    t_pred: float,
    y_pred: np.ndarray
) -> float:
    """
    tr F = d/sigma^2 - alpha^2/sigma^4 * (d * t_pred - |y_pred|^2).

    Shared by the exact trace and the trace-matching estimator so both agree
    bit for bit when fed exact moments.
    """
    alpha = sched.alpha(t)
    sigma = sched.sigma(t)
    s2 = sigma * sigma
    return d / s2 - (alpha * alpha / (s2 * s2)) * (d * t_pred - float(y_pred @ y_pred))


class InitialLaw(ABC):
    """An initial distribution q_0 with closed-form diffused quantities."""

    @property
    @abstractmethod
    def d(self) -> int:
        """Data dimension."""

    @abstractmethod
    def log_density(self, sched: NoiseSchedule, x, t: float) -> float:
        """Normalized log q_t(x)."""

    @abstractmethod
    def y_oracle(self, sched: NoiseSchedule, x, t: float) -> np.ndarray:
        """Posterior mean E[y | x_t = x]."""

    @abstractmethod
    def t_oracle(self, sched: NoiseSchedule, x, t: float) -> float:
        """Posterior mean square (1/d) E[|y|^2 | x_t = x]."""

    @abstractmethod
    def posterior_cov(self, sched: NoiseSchedule, x, t: float) -> np.ndarray:
        """Posterior covariance of y given x_t (the outer-product bracket)."""

    # ==================== SHARED ====================

    def _check(self, sched: NoiseSchedule, x, t: float) -> Tuple[np.ndarray, float, float, float]:
        t = float(sched.check_time(t))
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise DomainError(f"x must have shape ({self.d},), got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise DomainError("x has non-finite entries")
        return x, t, sched.alpha(t), sched.sigma(t)

    def score(self, sched: NoiseSchedule, x, t: float) -> np.ndarray:
        """grad_x log q_t(x) = -(x - alpha_t * ybar) / sigma_t^2."""
        x, t, alpha, sigma = self._check(sched, x, t)
        return -(x - alpha * self.y_oracle(sched, x, t)) / sigma ** 2

    def fisher_matrix(self, sched: NoiseSchedule, x, t: float) -> FisherEval:
        """F_t(x) = -Hessian of log q_t at x."""
        x, t, alpha, sigma = self._check(sched, x, t)
        inv_s2 = 1.0 / sigma ** 2
        coef = alpha ** 2 * inv_s2 ** 2
        matrix = inv_s2 * np.eye(self.d) - coef * self.posterior_cov(sched, x, t)
        matrix = 0.5 * (matrix + matrix.T)
        return FisherEval(matrix=matrix, trace=float(np.trace(matrix)))

    def fisher_trace(self, sched: NoiseSchedule, x, t: float) -> float:
        """tr F_t(x) from the posterior moments (no matrix assembly)."""
        x, t, _, _ = self._check(sched, x, t)
        return trace_from_moments(
            sched, t, self.d, self.t_oracle(sched, x, t), self.y_oracle(sched, x, t)
        )


@dataclass(frozen=True, eq=False)
class DiracDataset(InitialLaw):
    """
    Uniform mixture of point masses at the rows of `points`.

    Attributes:
        points: (N, d) array of data points y_i
        label: Free-form name used in reports
    """

    points: np.ndarray
    label: str = 'custom'
    D_y: float = field(init=False)
    _sq_norms: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        points = np.array(self.points, dtype=float, copy=True)
        if points.ndim == 1:
            points = points[:, None]
        if points.ndim != 2 or points.shape[0] < 1 or points.shape[1] < 1:
            raise DomainError(f"points must be a non-empty (N, d) array, got shape {points.shape}")
        if not np.all(np.isfinite(points)):
            raise DomainError("points contain non-finite values")
        points.setflags(write=False)
        object.__setattr__(self, 'points', points)
        object.__setattr__(self, 'D_y', float(np.max(np.linalg.norm(points, axis=1))))
        sq_norms = np.einsum('ij,ij->i', points, points)
        sq_norms.setflags(write=False)
        object.__setattr__(self, '_sq_norms', sq_norms)

    @property
    def N(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def mean(self) -> np.ndarray:
        return self.points.mean(axis=0)

    @property
    def variance_per_dim(self) -> float:
        """Mean per-dimension variance of the empirical law."""
        return float(np.mean(self.points.var(axis=0)))

    # ==================== I/O ====================

    @classmethod
    def from_csv(cls, path: str, label: Optional[str] = None) -> 'DiracDataset':
        """
        Load a dataset CSV with header x0,...,x{d-1}.

        Args:
            path: CSV file
            label: Report label (defaults to the path)

        Returns:
            DiracDataset
        """
        columns, rows = read_csv(path)
        expected = [f"x{j}" for j in range(len(columns))]
        if columns != expected:
            raise ConfigError(f"Dataset header must be {','.join(expected)}, got {','.join(columns)}")
        try:
            points = np.array([[float(v) for v in row] for row in rows], dtype=float)
        except ValueError as e:
            raise ConfigError(f"Non-numeric value in {path}: {e}") from e
        if points.size == 0:
            raise ConfigError(f"Dataset {path} has no rows")
        try:
            return cls(points=points, label=label or path)
        except DomainError as e:
            raise ConfigError(f"Invalid dataset {path}: {e}") from e

    def to_csv(self, path: str) -> str:
        """Write the dataset CSV."""
        return write_csv(path, [f"x{j}" for j in range(self.d)], self.points.tolist())

    # ==================== ORACLES ====================

    def weights(self, sched: NoiseSchedule, x, t: float) -> SoftWeights:
        """log v_i and softmax weights w_i (max-shifted)."""
        x, t, alpha, sigma = self._check(sched, x, t)
        diff = x[None, :] - alpha * self.points
        log_v = -np.einsum('ij,ij->i', diff, diff) / (2.0 * sigma ** 2)
        return SoftWeights(log_v=log_v, w=softmax(log_v))

    def log_density(self, sched: NoiseSchedule, x, t: float) -> float:
        """log q_t(x) = logsumexp(log v) - log N - (d/2) log(2 pi sigma^2)."""
        x, t, alpha, sigma = self._check(sched, x, t)
        log_v = self.weights(sched, x, t).log_v
        return float(
            logsumexp(log_v) - np.log(self.N) - 0.5 * self.d * np.log(2.0 * np.pi * sigma ** 2)
        )

    def y_oracle(self, sched: NoiseSchedule, x, t: float) -> np.ndarray:
        return self.weights(sched, x, t).w @ self.points

    def t_oracle(self, sched: NoiseSchedule, x, t: float) -> float:
        w = self.weights(sched, x, t).w
        return float(w @ self._sq_norms) / self.d

    def posterior_cov(self, sched: NoiseSchedule, x, t: float) -> np.ndarray:
        w = self.weights(sched, x, t).w
        centered = self.points - w @ self.points
        cov = (centered.T * w) @ centered
        return 0.5 * (cov + cov.T)


@dataclass(frozen=True, eq=False)
class GaussianInitial(InitialLaw):
    """
    Single-Gaussian initial law N(mean, cov).

    The diffused law is N(alpha_t mean, alpha_t^2 cov + sigma_t^2 I).
    """

    mean: np.ndarray
    cov: np.ndarray
    label: str = 'gaussian'

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float, copy=True).reshape(-1)
        cov = np.array(self.cov, dtype=float, copy=True)
        if cov.shape != (mean.size, mean.size):
            raise DomainError(f"cov must be ({mean.size}, {mean.size}), got {cov.shape}")
        if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(cov)):
            raise DomainError("mean / cov contain non-finite values")
        if np.max(np.abs(cov - cov.T)) > 1e-12:
            raise DomainError("cov is not symmetric")
        try:
            sl.cholesky(cov, lower=True)
        except sl.LinAlgError:
            raise DomainError("cov is not positive definite") from None
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, 'mean', mean)
        object.__setattr__(self, 'cov', cov)

    @property
    def d(self) -> int:
        return self.mean.size

    @property
    def variance_per_dim(self) -> float:
        return float(np.trace(self.cov)) / self.d

    def _diffused_cov(self, sched: NoiseSchedule, t: float) -> np.ndarray:
        alpha, sigma = sched.alpha(t), sched.sigma(t)
        return alpha ** 2 * self.cov + sigma ** 2 * np.eye(self.d)

    def _precision(self, sched: NoiseSchedule, t: float) -> np.ndarray:
        precision = sl.inv(self._diffused_cov(sched, t))
        return 0.5 * (precision + precision.T)

    def log_density(self, sched: NoiseSchedule, x, t: float) -> float:
        x, t, alpha, _ = self._check(sched, x, t)
        chol = sl.cho_factor(self._diffused_cov(sched, t), lower=True)
        diff = x - alpha * self.mean
        maha = float(diff @ sl.cho_solve(chol, diff))
        logdet = 2.0 * float(np.sum(np.log(np.diag(chol[0]))))
        return -0.5 * (self.d * np.log(2.0 * np.pi) + logdet + maha)

    def score(self, sched: NoiseSchedule, x, t: float) -> np.ndarray:
        """-(alpha^2 cov + sigma^2 I)^{-1} (x - alpha mean)."""
        x, t, alpha, _ = self._check(sched, x, t)
        return -self._precision(sched, t) @ (x - alpha * self.mean)

    def gaussian_fisher(self, sched: NoiseSchedule, t: float) -> FisherEval:
        """F = (alpha_t^2 cov + sigma_t^2 I)^{-1}, independent of x."""
        t = float(sched.check_time(t))
        matrix = self._precision(sched, t)
        return FisherEval(matrix=matrix, trace=float(np.trace(matrix)))

    def fisher_matrix(self, sched: NoiseSchedule, x, t: float) -> FisherEval:
        self._check(sched, x, t)
        return self.gaussian_fisher(sched, t)

    def y_oracle(self, sched: NoiseSchedule, x, t: float) -> np.ndarray:
        x, t, alpha, _ = self._check(sched, x, t)
        return self.mean + alpha * self.cov @ (self._precision(sched, t) @ (x - alpha * self.mean))

    def posterior_cov(self, sched: NoiseSchedule, x, t: float) -> np.ndarray:
        """(cov^{-1} + alpha^2/sigma^2 I)^{-1}, written without inverting cov."""
        t = float(sched.check_time(t))
        alpha = sched.alpha(t)
        post = self.cov - alpha ** 2 * self.cov @ self._precision(sched, t) @ self.cov
        return 0.5 * (post + post.T)

    def t_oracle(self, sched: NoiseSchedule, x, t: float) -> float:
        ybar = self.y_oracle(sched, x, t)
        return (float(ybar @ ybar) + float(np.trace(self.posterior_cov(sched, x, t)))) / self.d

    # ==================== SAMPLING ====================

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw n samples (n, d)."""
        return rng.multivariate_normal(self.mean, self.cov, size=n, method='cholesky')

    def as_dirac(self, n: int, rng: np.random.Generator) -> DiracDataset:
        """Empirical Dirac mixture of n samples."""
        return DiracDataset(points=self.sample(n, rng), label=f"{self.label}-dirac{n}")


def make_law(points: Optional[Sequence] = None, mean=None, cov=None, label: str = 'custom') -> InitialLaw:
    """Build a DiracDataset from points or a GaussianInitial from (mean, cov)."""
    if points is not None:
        return DiracDataset(points=np.asarray(points, dtype=float), label=label)
    if mean is None or cov is None:
        raise DomainError("need either points or (mean, cov)")
    return GaussianInitial(mean=mean, cov=cov, label=label)
