"""Checkpoint files: one JSON header line, then little-endian float64 parameters."""

import json
import logging
import os

import numpy as np

from src.diffusion.schedules import NoiseSchedule
from src.training.mlp import MLPNet
from src.training.model import DiffusionNet
from src.utils.csv_io import resolve_output_path
from src.utils.errors import ConfigError

logger = logging.getLogger(__name__)

FORMAT = 'df-lab-mlp/1'


def save_checkpoint(model: DiffusionNet, path: str) -> str:
    """
    Write a trained network.

    Args:
        model: Network to save
        path: Output file

    Returns:
        Resolved path
    """
    header = {
        'format': FORMAT,
        'head': model.head,
        'd': model.d,
        'widths': model.net.widths,
        'activation': model.net.activation,
        'n_time_features': model.n_time_features,
        'data_var': model.data_var,
        'target_scale': model.target_scale,
        'schedule': model.sched.to_config(),
        'shapes': [[list(l.W.shape), list(l.b.shape)] for l in model.net.layers],
        'n_params': model.net.n_params,
    }
    path = resolve_output_path(path)
    with open(path, 'wb') as f:
        f.write(json.dumps(header, sort_keys=True).encode('utf-8') + b'\n')
        f.write(np.asarray(model.net.flat_params(), dtype='<f8').tobytes())
    logger.info(f"💾 Saved {model.head} checkpoint ({model.net.n_params} params) to {path}")
    return path


def load_checkpoint(path: str) -> DiffusionNet:
    """Read a checkpoint written by save_checkpoint."""
    if not os.path.exists(path):
        raise ConfigError(f"Checkpoint not found: {path}")
    with open(path, 'rb') as f:
        first = f.readline()
        payload = f.read()
    try:
        header = json.loads(first.decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"Bad checkpoint header in {path}: {e}") from e
    if header.get('format') != FORMAT:
        raise ConfigError(f"Unsupported checkpoint format {header.get('format')!r} in {path}")
    flat = np.frombuffer(payload, dtype='<f8')
    if flat.size != header['n_params']:
        raise ConfigError(f"{path}: expected {header['n_params']} parameters, found {flat.size}")

    net = MLPNet(header['widths'], activation=header['activation'])
    net.load_flat(flat.astype(float))
    return DiffusionNet(
        net=net,
        head=header['head'],
        sched=NoiseSchedule.from_config(header['schedule']),
        d=int(header['d']),
        n_time_features=int(header['n_time_features']),
        data_var=float(header['data_var']),
        target_scale=float(header['target_scale'])
    )
