"""Toy-scale training of the epsilon and trace-matching networks."""

from .mlp import AdamW, MLPNet
from .model import DiffusionNet
from .trainer import TrainConfig, TrainResult, train_eps, train_tm

__all__ = [
    'MLPNet',
    'AdamW',
    'DiffusionNet',
    'TrainConfig',
    'TrainResult',
    'train_eps',
    'train_tm'
]
