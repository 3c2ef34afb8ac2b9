"""Shared pytest fixtures: schedules and small initial laws."""

import numpy as np
import pytest

from src.diffusion.schedules import NoiseSchedule, ScheduleKind
from src.fisher.oracle import DiracDataset, GaussianInitial
from src.training.datasets import AFFINE3, NONAFFINE3

ALL_KINDS = list(ScheduleKind)


@pytest.fixture(autouse=True)
def _quiet_env(monkeypatch):
    monkeypatch.setenv('DF_LAB_NO_PROGRESS', '1')
    monkeypatch.delenv('DF_LAB_OUTPUT_DIR', raising=False)


@pytest.fixture(params=ALL_KINDS, ids=[k.value for k in ALL_KINDS])
def sched(request):
    return NoiseSchedule(kind=request.param)


@pytest.fixture(params=ALL_KINDS, ids=[k.value for k in ALL_KINDS])
def experiment_sched(request):
    return NoiseSchedule.experiment(request.param)


@pytest.fixture
def vp():
    return NoiseSchedule(kind=ScheduleKind.VP)


@pytest.fixture
def ve():
    return NoiseSchedule(kind=ScheduleKind.VE)


@pytest.fixture
def single_point():
    return DiracDataset(points=[[0.3, -0.2]], label='single')


@pytest.fixture
def symmetric_pair():
    return DiracDataset(points=[[0.4, 0.2], [-0.4, -0.2]], label='pair')


@pytest.fixture
def affine3():
    return DiracDataset(points=AFFINE3, label='affine3')


@pytest.fixture
def nonaffine3():
    return DiracDataset(points=NONAFFINE3, label='nonaffine3')


@pytest.fixture
def gaussian():
    return GaussianInitial(mean=[0.5, 0.5], cov=np.eye(2))


@pytest.fixture
def skewed_gaussian():
    return GaussianInitial(mean=[0.2, -0.1], cov=[[1.0, 0.3], [0.3, 0.5]])


def diffused_points(law, sched, n, seed, t_low=0.2, t_high=1.0):
    """n random (x, t) pairs with t ~ U[t_low, t_high] and x = alpha_t y + sigma_t eps."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        t = float(rng.uniform(t_low, t_high) * sched.T)
        if isinstance(law, DiracDataset):
            y = law.points[rng.integers(law.N)]
        else:
            y = law.sample(1, rng)[0]
        out.append((sched.alpha(t) * y + sched.sigma(t) * rng.standard_normal(law.d), t))
    return out
