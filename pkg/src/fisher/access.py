"""Approximate Fisher access: VJP / Hutchinson baselines, DF-TM trace, DF-EA operator.

Everything is written against two small provider interfaces so the same code runs on
exact oracles and on trained networks:

    ScoreProvider.eps(x, t)      -> epsilon prediction, eps = -sigma_t * score
    TraceProvider.t_pred(x, t)   -> (1/d) E[|y|^2 | x_t = x]

The epsilon Jacobian is d eps / dx = sigma_t * F_t, so every F-product below is a
Jacobian product divided by sigma_t.
"""

import math
import logging
from abc import ABC, abstractmethod
from typing import Callable, Tuple

import numpy as np

from src.diffusion.schedules import NoiseSchedule
from src.fisher.oracle import InitialLaw, trace_from_moments
from src.utils.errors import ConfigError, DomainError

logger = logging.getLogger(__name__)

# Central-difference step for Jacobian products of trained nets.
FD_STEP = 1e-4


# ==================== PROVIDERS ====================

class ScoreProvider(ABC):
    """(x, t) -> epsilon prediction for one schedule."""

    sched: NoiseSchedule

    @property
    @abstractmethod
    def d(self) -> int:
        """Data dimension."""

    @abstractmethod
    def eps(self, x, t: float) -> np.ndarray:
        """Epsilon prediction at (x, t)."""

    def y_pred(self, x, t: float) -> np.ndarray:
        """Posterior-mean prediction (x - sigma_t eps) / alpha_t."""
        x = np.asarray(x, dtype=float)
        return (x - self.sched.sigma(t) * self.eps(x, t)) / self.sched.alpha(t)

    def jacobian_vecs(self, x, t: float, vs: np.ndarray, step: float = FD_STEP) -> np.ndarray:
        """
        Directional derivatives (d eps/dx) v for each row v of `vs`.

        Central finite differences, two provider calls per direction.

        Args:
            x: Point (d,)
            t: Time
            vs: Directions (k, d)
            step: Finite-difference step along each direction

        Returns:
            (k, d) array of Jacobian-vector products
        """
        x = np.asarray(x, dtype=float)
        vs = np.atleast_2d(np.asarray(vs, dtype=float))
        out = np.empty_like(vs)
        for k, v in enumerate(vs):
            out[k] = (self.eps(x + step * v, t) - self.eps(x - step * v, t)) / (2.0 * step)
        return out

    def jacobian_matrix(self, x, t: float) -> np.ndarray:
        """d eps / dx assembled column by column (d directional evaluations)."""
        return self.jacobian_vecs(x, t, np.eye(self.d)).T


class TraceProvider(ABC):
    """(x, t) -> scalar t-prediction."""

    @abstractmethod
    def t_pred(self, x, t: float) -> float:
        """Posterior mean-square prediction at (x, t)."""


class ExactProvider(ScoreProvider, TraceProvider):
    """
    Oracle provider backed by a closed-form initial law.

    Args:
        law: DiracDataset or GaussianInitial
        sched: Noise schedule
        analytic: Use the analytic Jacobian sigma_t * F (False = finite differences)
    """

    def __init__(self, law: InitialLaw, sched: NoiseSchedule, analytic: bool = True):
        self.law = law
        self.sched = sched
        self.analytic = analytic

    @property
    def d(self) -> int:
        return self.law.d

    def eps(self, x, t: float) -> np.ndarray:
        return -self.sched.sigma(t) * self.law.score(self.sched, x, t)

    def y_pred(self, x, t: float) -> np.ndarray:
        return self.law.y_oracle(self.sched, x, t)

    def t_pred(self, x, t: float) -> float:
        return self.law.t_oracle(self.sched, x, t)

    def jacobian_matrix(self, x, t: float) -> np.ndarray:
        if not self.analytic:
            return super().jacobian_matrix(x, t)
        return self.sched.sigma(t) * self.law.fisher_matrix(self.sched, x, t).matrix

    def jacobian_vecs(self, x, t: float, vs: np.ndarray, step: float = FD_STEP) -> np.ndarray:
        if not self.analytic:
            return super().jacobian_vecs(x, t, vs, step)
        vs = np.atleast_2d(np.asarray(vs, dtype=float))
        return vs @ self.jacobian_matrix(x, t).T


class NetProvider(ScoreProvider, TraceProvider):
    """
    Provider backed by trained networks.

    Args:
        eps_net: Trained epsilon network (anything with predict(x, t) -> (d,))
        sched: Noise schedule the nets were trained on
        tm_net: Optional trained trace-matching network (predict(x, t) -> (1,))
    """

    def __init__(self, eps_net, sched: NoiseSchedule, tm_net=None):
        self.eps_net = eps_net
        self.tm_net = tm_net
        self.sched = sched

    @property
    def d(self) -> int:
        return self.eps_net.d

    def eps(self, x, t: float) -> np.ndarray:
        t = float(self.sched.check_time(t))
        return self.eps_net.predict(np.asarray(x, dtype=float), t)

    def t_pred(self, x, t: float) -> float:
        if self.tm_net is None:
            raise ConfigError("NetProvider has no trace-matching network")
        t = float(self.sched.check_time(t))
        return float(self.tm_net.predict(np.asarray(x, dtype=float), t)[0])


class PerturbedProvider(ScoreProvider, TraceProvider):
    """
    Wraps a provider and injects controlled prediction errors.

    t_pred is shifted by delta1 / d (so d * t_pred moves by delta1). The delta2 error
    lies along `direction`, projected orthogonally to the base y-prediction, and is
    applied to eps (space='eps') or to the y-prediction itself (space='y'). The two
    heads stay consistent through y = (x - sigma_t eps) / alpha_t.

    Args:
        base: Provider to perturb
        delta1: Error on the scaled trace head d * t_pred
        delta2: Norm of the second error
        direction: Direction of the second error (d,), any non-zero vector
        space: 'eps' or 'y', where the delta2 error is measured
    """

    SPACES = ('eps', 'y')

    def __init__(self, base, delta1: float = 0.0, delta2: float = 0.0, direction=None, space: str = 'eps'):
        if delta1 < 0 or delta2 < 0:
            raise DomainError(f"perturbation sizes must be >= 0, got {delta1}, {delta2}")
        if space not in self.SPACES:
            raise DomainError(f"space must be one of {self.SPACES}, got {space!r}")
        self.space = space
        self.base = base
        self.sched = base.sched
        self.delta1 = float(delta1)
        self.delta2 = float(delta2)
        if direction is None:
            direction = np.ones(base.d)
        self.direction = np.asarray(direction, dtype=float)
        if self.direction.shape != (base.d,) or not np.any(self.direction):
            raise DomainError("direction must be a non-zero vector of length d")

    @property
    def d(self) -> int:
        return self.base.d

    def _unit(self, x, t: float) -> np.ndarray:
        ybar = self.base.y_pred(x, t)
        u = self.direction.copy()
        norm_y = float(ybar @ ybar)
        if norm_y > 0:
            u -= (u @ ybar) / norm_y * ybar
        norm_u = float(np.linalg.norm(u))
        if norm_u < 1e-12:
            raise DomainError("no direction orthogonal to the y-prediction (d = 1?)")
        return u / norm_u

    def _eps_shift(self, t: float) -> float:
        """Size of the eps move; a y move of delta2 is an eps move of -(alpha / sigma) delta2."""
        if self.space == 'eps':
            return self.delta2
        return -self.sched.alpha(t) / self.sched.sigma(t) * self.delta2

    def eps(self, x, t: float) -> np.ndarray:
        eps = self.base.eps(x, t)
        if self.delta2 == 0:
            return eps
        return eps + self._eps_shift(t) * self._unit(x, t)

    def y_pred(self, x, t: float) -> np.ndarray:
        ybar = self.base.y_pred(x, t)
        if self.delta2 == 0:
            return ybar
        if self.space == 'y':
            return ybar + self.delta2 * self._unit(x, t)
        return ybar - (self.sched.sigma(t) / self.sched.alpha(t)) * self.delta2 * self._unit(x, t)

    def t_pred(self, x, t: float) -> float:
        return self.base.t_pred(x, t) + self.delta1 / self.d


# ==================== FISHER ACCESS ====================

def vjp_apply(sp: ScoreProvider, x, t: float, v) -> np.ndarray:
    """
    F_t(x)^T v via the epsilon Jacobian: (1/sigma_t) J^T v.

    Args:
        sp: Score provider
        x: Point (d,)
        t: Time in [t_min, T]
        v: Vector (d,)

    Returns:
        (d,) product
    """
    t = float(sp.sched.check_time(t))
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise DomainError("v has non-finite entries")
    return sp.jacobian_matrix(x, t).T @ v / sp.sched.sigma(t)


def trace_via_vjp(sp: ScoreProvider, x, t: float) -> float:
    """tr F from d directional evaluations along the coordinate axes."""
    t = float(sp.sched.check_time(t))
    eye = np.eye(sp.d)
    jv = sp.jacobian_vecs(x, t, eye)
    return float(np.sum(jv * eye)) / sp.sched.sigma(t)


def trace_hutchinson(sp: ScoreProvider, x, t: float, n_probes: int, rng_seed: int = 0) -> float:
    """
    Hutchinson estimate of tr F with Rademacher probes.

    Args:
        sp: Score provider
        x: Point (d,)
        t: Time in [t_min, T]
        n_probes: Number of probes (one Jacobian product each)
        rng_seed: Seed for the probe draw

    Returns:
        (1/sigma_t) * mean_k z_k^T J z_k
    """
    if n_probes < 1:
        raise DomainError(f"n_probes must be >= 1, got {n_probes}")
    t = float(sp.sched.check_time(t))
    rng = np.random.default_rng(rng_seed)
    probes = rng.integers(0, 2, size=(n_probes, sp.d)) * 2.0 - 1.0
    jz = sp.jacobian_vecs(x, t, probes)
    return float(np.mean(np.sum(probes * jz, axis=1))) / sp.sched.sigma(t)


def hutchinson_sample_count(eps: float, delta: float) -> int:
    """Probes for an (eps, delta) relative guarantee: 2(1 - 8eps/3) log(1/delta) / eps^2."""
    if not 0 < eps < 0.375 or not 0 < delta < 1:
        raise DomainError(f"need 0 < eps < 3/8 and 0 < delta < 1, got {eps}, {delta}")
    return int(math.ceil(2.0 * (1.0 - 8.0 * eps / 3.0) * math.log(1.0 / delta) / eps ** 2))


def df_tm_trace(tp: TraceProvider, sp: ScoreProvider, sched: NoiseSchedule, x, t: float) -> float:
    """DF-TM trace: one t-prediction and one y-prediction, no Jacobian."""
    t = float(sched.check_time(t))
    x = np.asarray(x, dtype=float)
    return trace_from_moments(sched, t, x.size, tp.t_pred(x, t), sp.y_pred(x, t))


def df_ea_apply(x0, yhat, lam, sched: NoiseSchedule, t: float) -> np.ndarray:
    """
    DF-EA operator: the weighted second moment replaced by the endpoint outer product.

    lam / sigma^2 - (alpha^2 / sigma^4) <x0, lam> x0 + (alpha^2 / sigma^4) <yhat, lam> yhat

    Args:
        x0: Endpoint sample (d,)
        yhat: y-prediction at the current state (d,)
        lam: Adjoint state (d,)
        sched: Noise schedule
        t: Time in [t_min, T]

    Returns:
        (d,) operator output
    """
    t = float(sched.check_time(t))
    x0 = np.asarray(x0, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if not (x0.shape == yhat.shape == lam.shape):
        raise DomainError(f"shape mismatch: {x0.shape}, {yhat.shape}, {lam.shape}")
    alpha, sigma = sched.alpha(t), sched.sigma(t)
    inv_s2 = 1.0 / sigma ** 2
    coef = alpha ** 2 * inv_s2 ** 2
    return lam * inv_s2 + coef * (float(yhat @ lam) * yhat - float(x0 @ lam) * x0)


# ==================== ERROR BOUNDS ====================

def bound_trace_error(delta1: float, delta2: float, sched: NoiseSchedule, t: float) -> float:
    """Worst-case DF-TM trace error: (alpha^2/sigma^4) delta1 + delta2^2 / sigma^2."""
    if delta1 < 0 or delta2 < 0:
        raise DomainError(f"error sizes must be >= 0, got {delta1}, {delta2}")
    t = float(sched.check_time(t))
    alpha, sigma = sched.alpha(t), sched.sigma(t)
    return alpha ** 2 / sigma ** 4 * delta1 + delta2 ** 2 / sigma ** 2


def bound_ea_error(delta2: float, D_y: float, d: int, sched: NoiseSchedule, t: float) -> float:
    """
    Hilbert-Schmidt bound on the DF-EA operator error (epsilon-Jacobian scale).

    delta2 bounds the y-prediction error |y_hat - E[y | x]|.
    """
    if delta2 < 0 or D_y < 0 or d < 1:
        raise DomainError(f"need delta2 >= 0, D_y >= 0, d >= 1; got {delta2}, {D_y}, {d}")
    t = float(sched.check_time(t))
    alpha, sigma = sched.alpha(t), sched.sigma(t)
    return alpha ** 2 / sigma ** 3 * (2.0 * D_y ** 2 + math.sqrt(d) * delta2)


# ==================== HELPERS ====================

def relative_error(estimate: float, truth: float) -> float:
    """|estimate - truth| / |truth|, NaN for a zero reference."""
    if truth == 0:
        return float('nan')
    return abs(estimate - truth) / abs(truth)


def summarize_errors(errors) -> Tuple[float, float]:
    """(mean, max) over points with a defined relative error; NaN when none is defined."""
    errors = np.asarray(errors, dtype=float)
    defined = errors[~np.isnan(errors)]
    if defined.size < errors.size:
        logger.warning(f"⚠️ {errors.size - defined.size} point(s) with a zero exact trace left out")
    if not defined.size:
        return float('nan'), float('nan')
    return float(np.mean(defined)), float(np.max(defined))


def operator_matrix(apply: Callable[[np.ndarray], np.ndarray], d: int) -> np.ndarray:
    """Assemble a linear operator as a d x d matrix from d applications."""
    return np.column_stack([apply(e) for e in np.eye(d)])


def hs_norm(matrix: np.ndarray) -> float:
    """Hilbert-Schmidt (Frobenius) norm."""
    return float(np.linalg.norm(matrix, 'fro'))
