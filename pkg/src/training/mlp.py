"""Small fully connected network with hand-written backpropagation and AdamW.

Layers keep no per-call state: forward returns the cache that backward needs, so a
trained network can be evaluated from several threads at once.
"""

import math
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from src.utils.errors import ConfigError, DomainError

logger = logging.getLogger(__name__)


class Linear:
    """y = x W + b for a batch x of shape (B, n_in)."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        bound = 1.0 / math.sqrt(n_in)
        self.W = rng.uniform(-bound, bound, size=(n_in, n_out))
        self.b = np.zeros(n_out)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return x @ self.W + self.b

    def backward(self, x: np.ndarray, dout: np.ndarray) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
        """Gradients w.r.t. the input and the parameters, given the saved input."""
        return dout @ self.W.T, {'W': x.T @ dout, 'b': dout.sum(axis=0)}


class Tanh:
    def forward(self, z: np.ndarray) -> np.ndarray:
        return np.tanh(z)

    def backward(self, z: np.ndarray, dout: np.ndarray) -> np.ndarray:
        return dout * (1.0 - np.tanh(z) ** 2)


class SiLU:
    def forward(self, z: np.ndarray) -> np.ndarray:
        return z * expit(z)

    def backward(self, z: np.ndarray, dout: np.ndarray) -> np.ndarray:
        s = expit(z)
        return dout * s * (1.0 + z * (1.0 - s))


ACTIVATIONS = {'tanh': Tanh, 'silu': SiLU}


class MLPNet:
    """
    Multi-layer perceptron with a smooth activation between linear layers.

    Args:
        widths: Layer widths [n_in, hidden..., n_out]
        activation: 'silu' or 'tanh'
        seed: Initialization seed
    """

    def __init__(self, widths: Sequence[int], activation: str = 'silu', seed: int = 0):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or min(widths) < 1:
            raise ConfigError(f"widths must list at least input and output sizes, got {widths}")
        if activation not in ACTIVATIONS:
            raise ConfigError(f"Unknown activation {activation!r}; choose from {sorted(ACTIVATIONS)}")
        self.widths = widths
        self.activation = activation
        self.act = ACTIVATIONS[activation]()
        rng = np.random.default_rng(seed)
        self.layers = [Linear(a, b, rng) for a, b in zip(widths[:-1], widths[1:])]

    @property
    def n_in(self) -> int:
        return self.widths[0]

    @property
    def n_out(self) -> int:
        return self.widths[-1]

    # ==================== FORWARD / BACKWARD ====================

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, List[Tuple[np.ndarray, np.ndarray]]]:
        """
        Forward pass.

        Args:
            x: Inputs (B, n_in)

        Returns:
            (outputs (B, n_out), cache of (layer input, pre-activation) per layer)
        """
        h = np.atleast_2d(np.asarray(x, dtype=float))
        if h.shape[1] != self.n_in:
            raise DomainError(f"expected {self.n_in} input features, got {h.shape[1]}")
        cache = []
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            z = layer.forward(h)
            cache.append((h, z))
            h = z if i == last else self.act.forward(z)
        return h, cache

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache, dout: np.ndarray) -> List[Dict[str, np.ndarray]]:
        """Parameter gradients for an upstream gradient dout (B, n_out)."""
        grads: List[Optional[Dict[str, np.ndarray]]] = [None] * len(self.layers)
        last = len(self.layers) - 1
        for i in range(last, -1, -1):
            h, z = cache[i]
            if i != last:
                dout = self.act.backward(z, dout)
            dout, grads[i] = self.layers[i].backward(h, dout)
        return grads

    # ==================== PARAMETERS ====================

    def parameters(self) -> List[Dict[str, np.ndarray]]:
        """Live parameter arrays, one {'W', 'b'} dict per layer."""
        return [{'W': layer.W, 'b': layer.b} for layer in self.layers]

    @property
    def n_params(self) -> int:
        return sum(layer.W.size + layer.b.size for layer in self.layers)

    def flat_params(self) -> np.ndarray:
        """All parameters as one float64 vector (W then b, layer by layer)."""
        return np.concatenate([np.concatenate([l.W.ravel(), l.b]) for l in self.layers])

    def load_flat(self, flat: np.ndarray):
        """Inverse of flat_params."""
        flat = np.asarray(flat, dtype=float)
        if flat.size != self.n_params:
            raise ConfigError(f"expected {self.n_params} parameters, got {flat.size}")
        offset = 0
        for layer in self.layers:
            n = layer.W.size
            layer.W = flat[offset:offset + n].reshape(layer.W.shape).copy()
            offset += n
            n = layer.b.size
            layer.b = flat[offset:offset + n].copy()
            offset += n

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(l.W)) and np.all(np.isfinite(l.b)) for l in self.layers)


def mse_loss(pred: np.ndarray, target: np.ndarray, weights: Optional[np.ndarray] = None):
    """
    Weighted mean squared error over the batch (summed over output features).

    Returns:
        (loss, gradient w.r.t. pred)
    """
    residual = pred - target
    batch = residual.shape[0]
    if weights is None:
        weights = np.ones(batch)
    per_sample = np.sum(residual ** 2, axis=1)
    loss = float(np.mean(weights * per_sample))
    return loss, 2.0 * weights[:, None] * residual / batch


class AdamW:
    """
    Adam with decoupled weight decay.

    Args:
        params: Parameter dicts from MLPNet.parameters()
        lr: Learning rate
        weight_decay: Decoupled decay coefficient
        betas: First / second moment decay rates
        eps: Denominator floor
    """

    def __init__(
        self,
        params: List[Dict[str, np.ndarray]],
        lr: float = 1e-4,
        weight_decay: float = 0.0,
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8
    ):
        if lr <= 0 or weight_decay < 0:
            raise ConfigError(f"need lr > 0 and weight_decay >= 0, got {lr}, {weight_decay}")
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [{k: np.zeros_like(v) for k, v in p.items()} for p in params]
        self.v = [{k: np.zeros_like(v) for k, v in p.items()} for p in params]

    def step(self, grads: List[Dict[str, np.ndarray]]):
        """Update the parameters in place."""
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            for key in p:
                m[key] *= self.beta1
                m[key] += (1.0 - self.beta1) * g[key]
                v[key] *= self.beta2
                v[key] += (1.0 - self.beta2) * g[key] ** 2
                p[key] *= 1.0 - self.lr * self.weight_decay
                p[key] -= self.lr * (m[key] / c1) / (np.sqrt(v[key] / c2) + self.eps)
