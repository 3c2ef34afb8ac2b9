"""Training loops for the epsilon network and the trace-matching (DF-TM) network."""

import logging
from dataclasses import dataclass, asdict, field
from typing import Dict, List, Tuple

import numpy as np
from tqdm import tqdm

from src.diffusion.schedules import NoiseSchedule
from src.fisher.oracle import DiracDataset, InitialLaw
from src.training.mlp import AdamW, MLPNet, mse_loss
from src.training.model import DiffusionNet
from src.utils.errors import ConfigError, TrainingError
from src.utils.parallel import progress_enabled

logger = logging.getLogger(__name__)

LOSS_WEIGHTS = ('constant', 'sigma2')


@dataclass(frozen=True)
class TrainConfig:
    """
    Optimization and architecture knobs shared by both heads.

    Attributes:
        batch_size: Minibatch size
        n_steps: Optimizer steps
        learning_rate: AdamW learning rate
        weight_decay: Decoupled weight decay
        seed: Seed for initialization and minibatch draws
        hidden: Hidden layer widths
        activation: 'silu' or 'tanh'
        n_time_features: Sinusoidal time features
        loss_weight: 'constant' (lambda_t = 1) or 'sigma2' (lambda_t = sigma_t^2)
        log_every: Steps between loss log lines
    """

    batch_size: int = 256
    n_steps: int = 20000
    learning_rate: float = 1e-4
    weight_decay: float = 1e-6
    seed: int = 0
    hidden: Tuple[int, ...] = (64, 64, 64)
    activation: str = 'silu'
    n_time_features: int = 8
    loss_weight: str = 'constant'
    log_every: int = 1000

    def __post_init__(self):
        object.__setattr__(self, 'hidden', tuple(int(h) for h in self.hidden))
        if self.batch_size < 1 or self.n_steps < 1 or self.log_every < 1:
            raise ConfigError("batch_size, n_steps and log_every must be positive")
        if self.learning_rate <= 0 or self.weight_decay < 0:
            raise ConfigError("learning_rate must be > 0 and weight_decay >= 0")
        if self.loss_weight not in LOSS_WEIGHTS:
            raise ConfigError(f"Unknown loss_weight {self.loss_weight!r}; choose from {LOSS_WEIGHTS}")

    @classmethod
    def from_config(cls, block: Dict) -> 'TrainConfig':
        """Build from a config block; unknown keys are an error."""
        unknown = set(block) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"Unknown train keys: {sorted(unknown)}")
        return cls(**block)

    def to_config(self) -> Dict:
        block = asdict(self)
        block['hidden'] = list(self.hidden)
        return block


@dataclass
class TrainResult:
    """Trained network and its per-step training loss."""

    net: DiffusionNet
    losses: np.ndarray = field(repr=False)

    @property
    def final_loss(self) -> float:
        """Mean loss over the last 100 steps."""
        return float(np.mean(self.losses[-100:]))


def _build(head: str, ds: DiracDataset, sched: NoiseSchedule, cfg: TrainConfig) -> DiffusionNet:
    d = ds.d
    out = d if head == 'eps' else 1
    widths = [d + cfg.n_time_features, *cfg.hidden, out]
    target_scale = 1.0
    if head == 'tm':
        target_scale = max(float(np.mean(np.sum(ds.points ** 2, axis=1))) / d, 1e-12)
    return DiffusionNet(
        net=MLPNet(widths, activation=cfg.activation, seed=cfg.seed),
        head=head,
        sched=sched,
        d=d,
        n_time_features=cfg.n_time_features,
        data_var=max(ds.variance_per_dim, 1e-12),
        target_scale=target_scale
    )


def _draw(ds: DiracDataset, sched: NoiseSchedule, batch: int, rng: np.random.Generator):
    """x0 ~ data, t ~ U[t_min, T], eps ~ N(0, I); returns (x0, t, eps, x_t)."""
    x0 = ds.points[rng.integers(0, ds.N, size=batch)]
    t = rng.uniform(sched.t_min, sched.T, size=batch)
    eps = rng.standard_normal(size=x0.shape)
    alpha = np.asarray(sched.alpha(t))[:, None]
    sigma = np.asarray(sched.sigma(t))[:, None]
    return x0, t, eps, alpha * x0 + sigma * eps


def _targets(model: DiffusionNet, x0: np.ndarray, eps: np.ndarray) -> np.ndarray:
    if model.head == 'eps':
        return eps
    return (np.sum(x0 ** 2, axis=1) / model.d / model.target_scale)[:, None]


def _weights(cfg: TrainConfig, sched: NoiseSchedule, t: np.ndarray) -> np.ndarray:
    if cfg.loss_weight == 'sigma2':
        return np.asarray(sched.sigma(t)) ** 2
    return np.ones_like(t)


def _train(head: str, ds: DiracDataset, sched: NoiseSchedule, cfg: TrainConfig,
           show_progress: bool) -> TrainResult:
    if not isinstance(ds, DiracDataset):
        raise ConfigError("training needs a sample dataset (Dirac mixture)")
    model = _build(head, ds, sched, cfg)
    opt = AdamW(model.net.parameters(), lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed)
    losses = np.empty(cfg.n_steps)

    logger.info(f"🔧 Training {head} net {model.net.widths} on {ds.label} ({ds.N} points), {sched.describe()}")
    bar = tqdm(range(cfg.n_steps), desc=f"train-{head}", disable=not progress_enabled(show_progress))
    for step in bar:
        x0, t, eps, xt = _draw(ds, sched, cfg.batch_size, rng)
        pred, cache = model.forward(xt, t)
        loss, dout = mse_loss(pred, _targets(model, x0, eps), _weights(cfg, sched, t))
        if not np.isfinite(loss):
            raise TrainingError(f"{head} loss is not finite", step=step)
        opt.step(model.net.backward(cache, dout))
        losses[step] = loss
        if (step + 1) % cfg.log_every == 0:
            recent = float(np.mean(losses[max(0, step + 1 - cfg.log_every):step + 1]))
            bar.set_postfix(loss=f"{recent:.4f}")
            logger.debug(f"{head} step {step + 1}: loss {recent:.6f}")
    if not model.net.all_finite():
        raise TrainingError(f"{head} parameters are not finite", step=cfg.n_steps)

    result = TrainResult(net=model, losses=losses)
    logger.info(f"✅ {head} net trained, final loss {result.final_loss:.5f}")
    return result


def train_eps(ds: DiracDataset, sched: NoiseSchedule, cfg: TrainConfig,
              show_progress: bool = True) -> TrainResult:
    """
    Fit eps_theta(alpha_t x0 + sigma_t eps, t) to eps by minibatch AdamW.

    Args:
        ds: Training points
        sched: Noise schedule
        cfg: Training configuration
        show_progress: Show a tqdm bar

    Returns:
        TrainResult with the epsilon network
    """
    return _train('eps', ds, sched, cfg, show_progress)


def train_tm(ds: DiracDataset, sched: NoiseSchedule, cfg: TrainConfig,
             show_progress: bool = True) -> TrainResult:
    """Fit t_theta(x_t, t) to |x0|^2 / d (the trace-matching target)."""
    return _train('tm', ds, sched, cfg, show_progress)


# ==================== DIAGNOSTICS ====================

def evaluate_loss(model: DiffusionNet, ds: DiracDataset, sched: NoiseSchedule,
                  n: int = 4096, seed: int = 12345) -> float:
    """Unweighted training loss on a fresh held-out batch (in data units)."""
    rng = np.random.default_rng(seed)
    x0, t, eps, xt = _draw(ds, sched, n, rng)
    pred = model.predict_batch(xt, t)
    if model.head == 'eps':
        return float(np.mean(np.sum((pred - eps) ** 2, axis=1)))
    return float(np.mean((pred - np.sum(x0 ** 2, axis=1) / model.d) ** 2))


def rms_to_oracle(model: DiffusionNet, law: InitialLaw, sched: NoiseSchedule,
                  xs: np.ndarray, ts: np.ndarray) -> float:
    """
    RMS distance between a trained head and its closed-form optimum on given points.

    Args:
        model: Trained network
        law: Initial law providing the oracle
        sched: Schedule
        xs: Points (n, d)
        ts: Times (n,)

    Returns:
        sqrt(mean |pred - oracle|^2), per coordinate for the epsilon head
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ts = np.asarray(ts, dtype=float)
    pred = model.predict_batch(xs, ts)
    if model.head == 'eps':
        oracle = np.array([-sched.sigma(t) * law.score(sched, x, t) for x, t in zip(xs, ts)])
        return float(np.sqrt(np.mean((pred - oracle) ** 2)))
    oracle = np.array([law.t_oracle(sched, x, t) for x, t in zip(xs, ts)])
    return float(np.sqrt(np.mean((pred - oracle) ** 2)))


def smoothed(losses: np.ndarray, window: int = 100) -> np.ndarray:
    """Moving average over non-overlapping windows."""
    n = len(losses) // window
    if n == 0:
        return np.array([float(np.mean(losses))])
    return losses[:n * window].reshape(n, window).mean(axis=1)


def diffused_grid(law: InitialLaw, sched: NoiseSchedule, ts: List[float], per_t: int,
                  seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Evaluation points x_t = alpha_t y + sigma_t eps for y drawn from the law."""
    rng = np.random.default_rng(seed)
    xs, tt = [], []
    for t in ts:
        if isinstance(law, DiracDataset):
            y = law.points[rng.integers(0, law.N, size=per_t)]
        else:
            y = law.sample(per_t, rng)
        xs.append(sched.alpha(t) * y + sched.sigma(t) * rng.standard_normal(size=y.shape))
        tt.append(np.full(per_t, float(t)))
    return np.concatenate(xs), np.concatenate(tt)
