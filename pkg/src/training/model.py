"""Time-conditioned wrapper around MLPNet for the epsilon and trace-matching heads."""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.diffusion.schedules import NoiseSchedule
from src.training.mlp import MLPNet
from src.utils.errors import ConfigError

logger = logging.getLogger(__name__)

HEADS = ('eps', 'tm')


def time_features(sigma: np.ndarray, n_features: int) -> np.ndarray:
    """
    Sinusoidal features of c_noise = ln(sigma) / 4.

    Args:
        sigma: Noise levels (B,)
        n_features: Even number of features (sin / cos pairs at frequencies 1, 2, 4, ...)

    Returns:
        (B, n_features) array
    """
    if n_features % 2:
        raise ConfigError(f"n_time_features must be even, got {n_features}")
    c_noise = 0.25 * np.log(np.asarray(sigma, dtype=float))
    freqs = 2.0 ** np.arange(n_features // 2)
    angles = c_noise[:, None] * freqs[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


@dataclass
class DiffusionNet:
    """
    MLP plus the input / output conditioning for one prediction head.

    Inputs are c_in * x with c_in = 1 / sqrt(alpha^2 data_var + sigma^2), followed by
    the time features. The trace head predicts |x0|^2 / d in units of `target_scale`.

    Attributes:
        net: Underlying MLP (input width d + n_time_features)
        head: 'eps' or 'tm'
        sched: Schedule the net is trained on
        d: Data dimension
        n_time_features: Number of sinusoidal time features
        data_var: Per-dimension data variance used by c_in
        target_scale: Output scale of the trace head (1 for 'eps')
    """

    net: MLPNet
    head: str
    sched: NoiseSchedule
    d: int
    n_time_features: int = 8
    data_var: float = 1.0
    target_scale: float = 1.0

    def __post_init__(self):
        if self.head not in HEADS:
            raise ConfigError(f"Unknown head {self.head!r}; choose from {HEADS}")
        expected_out = self.d if self.head == 'eps' else 1
        if self.net.n_in != self.d + self.n_time_features or self.net.n_out != expected_out:
            raise ConfigError(
                f"net widths {self.net.widths} do not fit head={self.head}, d={self.d}, "
                f"n_time_features={self.n_time_features}"
            )

    def encode(self, x: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Network inputs for a batch x (B, d) at times t (B,)."""
        t = np.asarray(t, dtype=float)
        alpha = np.asarray(self.sched.alpha(t), dtype=float)
        sigma = np.asarray(self.sched.sigma(t), dtype=float)
        c_in = 1.0 / np.sqrt(alpha ** 2 * self.data_var + sigma ** 2)
        return np.concatenate([c_in[:, None] * x, time_features(sigma, self.n_time_features)], axis=1)

    def forward(self, x: np.ndarray, t: np.ndarray) -> Tuple[np.ndarray, list]:
        """Raw network output and backward cache (training path)."""
        return self.net.forward(self.encode(x, t))

    def predict_batch(self, x: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Head outputs in data units: (B, d) for 'eps', (B,) for 'tm'."""
        out = self.net(self.encode(np.atleast_2d(x), np.atleast_1d(t)))
        if self.head == 'tm':
            return self.target_scale * out[:, 0]
        return out

    def predict(self, x: np.ndarray, t: float) -> np.ndarray:
        """Single-point prediction: (d,) for 'eps', (1,) for 'tm'."""
        out = self.predict_batch(np.asarray(x, dtype=float)[None, :], np.array([float(t)]))
        return out[0] if self.head == 'eps' else out
