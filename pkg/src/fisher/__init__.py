"""Exact diffusion Fisher oracles and approximate Fisher access."""

from .oracle import DiracDataset, GaussianInitial, InitialLaw, make_law
from .access import ExactProvider, NetProvider, PerturbedProvider, ScoreProvider, TraceProvider

__all__ = [
    'InitialLaw',
    'DiracDataset',
    'GaussianInitial',
    'make_law',
    'ScoreProvider',
    'TraceProvider',
    'ExactProvider',
    'NetProvider',
    'PerturbedProvider'
]
