"""Built-in 2-D datasets: chessboard samples, the OT point triples and the default Gaussian."""

import logging

import numpy as np

from src.fisher.oracle import DiracDataset, GaussianInitial, InitialLaw
from src.utils.csv_io import read_json
from src.utils.errors import ConfigError, DomainError

logger = logging.getLogger(__name__)

# Three collinear points (x = 0.2) and three points in general position.
AFFINE3 = np.array([[0.2, -0.4], [0.2, 0.0], [0.2, 0.9]])
NONAFFINE3 = np.array([[0.0, 0.5], [0.0, 0.0], [0.5, 0.0]])

GAUSSIAN_MEAN = np.array([0.5, 0.5])
GAUSSIAN_COV = np.eye(2)

CHESSBOARD_SIZE = 5000
BUILTIN_NAMES = ('chessboard', 'affine3', 'nonaffine3', 'gaussian')


def chessboard_square(points: np.ndarray) -> np.ndarray:
    """Cell index (row * 4 + col) of each point on the 4x4 board over [-2, 2]^2."""
    cells = np.clip(np.floor(np.asarray(points) + 2.0).astype(int), 0, 3)
    return cells[:, 1] * 4 + cells[:, 0]


def is_black(points: np.ndarray) -> np.ndarray:
    """True for points inside a black square (cell row + col even)."""
    points = np.asarray(points, dtype=float)
    inside = np.all((points >= -2.0) & (points <= 2.0), axis=1)
    cells = np.clip(np.floor(points + 2.0).astype(int), 0, 3)
    return inside & ((cells[:, 0] + cells[:, 1]) % 2 == 0)


def gen_chessboard(n: int = CHESSBOARD_SIZE, seed: int = 0) -> DiracDataset:
    """
    Sample n points uniformly from the black squares of a 4x4 board on [-2, 2]^2.

    Args:
        n: Number of points
        seed: RNG seed

    Returns:
        DiracDataset labelled 'chessboard'
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    kept = []
    total = 0
    while total < n:
        cand = rng.uniform(-2.0, 2.0, size=(2 * (n - total) + 16, 2))
        cand = cand[is_black(cand)]
        kept.append(cand)
        total += len(cand)
    points = np.concatenate(kept)[:n]
    logger.debug(f"chessboard: {n} points, seed {seed}")
    return DiracDataset(points=points, label='chessboard')


def builtin_law(name: str, n: int = CHESSBOARD_SIZE, seed: int = 0) -> InitialLaw:
    """
    Look up a built-in initial law by name.

    Args:
        name: 'chessboard', 'affine3', 'nonaffine3' or 'gaussian'
        n: Sample count (chessboard only)
        seed: RNG seed (chessboard only)
    """
    if name == 'chessboard':
        return gen_chessboard(n, seed)
    if name == 'affine3':
        return DiracDataset(points=AFFINE3, label='affine3')
    if name == 'nonaffine3':
        return DiracDataset(points=NONAFFINE3, label='nonaffine3')
    if name == 'gaussian':
        return GaussianInitial(mean=GAUSSIAN_MEAN, cov=GAUSSIAN_COV, label='gaussian')
    raise ConfigError(f"Unknown dataset {name!r}; choose from {BUILTIN_NAMES} or a CSV path")


def load_law(source: str, n: int = CHESSBOARD_SIZE, seed: int = 0) -> InitialLaw:
    """
    Resolve a --data value: built-in name, dataset CSV, or Gaussian JSON ({"mean", "cov"}).

    Args:
        source: Name or path
        n: Chessboard sample count
        seed: Chessboard seed
    """
    if source in BUILTIN_NAMES:
        return builtin_law(source, n, seed)
    if source.endswith('.json'):
        payload = read_json(source)
        if set(payload) - {'mean', 'cov', 'label'} or not {'mean', 'cov'} <= set(payload):
            raise ConfigError(f"{source} must hold 'mean' and 'cov'")
        try:
            return GaussianInitial(mean=payload['mean'], cov=payload['cov'], label=payload.get('label', source))
        except DomainError as e:
            raise ConfigError(f"Invalid Gaussian in {source}: {e}") from e
    return DiracDataset.from_csv(source)
