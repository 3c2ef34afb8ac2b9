"""Test the MLP backpropagation and the AdamW optimizer."""

import numpy as np
import pytest

from src.training.mlp import AdamW, MLPNet, SiLU, Tanh, mse_loss
from src.utils.errors import ConfigError, DomainError


def _loss(net, x, target):
    return mse_loss(net(x), target)[0]


def _flat_grads(grads):
    return np.concatenate([np.concatenate([g['W'].ravel(), g['b']]) for g in grads])


@pytest.mark.parametrize('activation', ['silu', 'tanh'])
def test_backward_matches_finite_differences(activation):
    net = MLPNet([2, 4, 1], activation=activation, seed=3)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((5, 2))
    target = rng.standard_normal((5, 1))
    # nonzero biases so their gradients are not trivially tied to the data
    net.load_flat(net.flat_params() + 0.1 * rng.standard_normal(net.n_params))

    pred, cache = net.forward(x)
    analytic = _flat_grads(net.backward(cache, mse_loss(pred, target)[1]))

    base = net.flat_params()
    h = 1e-6
    numeric = np.empty_like(base)
    for i in range(base.size):
        shift = np.zeros_like(base)
        shift[i] = h
        net.load_flat(base + shift)
        up = _loss(net, x, target)
        net.load_flat(base - shift)
        down = _loss(net, x, target)
        numeric[i] = (up - down) / (2 * h)
    net.load_flat(base)

    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    assert np.all(np.abs(analytic - numeric) <= 1e-4 * scale + 1e-9)


def test_activation_derivatives():
    z = np.linspace(-3.0, 3.0, 13)
    h = 1e-6
    for act in (SiLU(), Tanh()):
        numeric = (act.forward(z + h) - act.forward(z - h)) / (2 * h)
        np.testing.assert_allclose(act.backward(z, np.ones_like(z)), numeric, rtol=1e-6, atol=1e-9)


def test_weighted_mse():
    pred = np.array([[1.0, 0.0], [0.0, 2.0]])
    target = np.zeros((2, 2))
    loss, grad = mse_loss(pred, target, weights=np.array([1.0, 0.5]))
    assert loss == pytest.approx((1.0 + 0.5 * 4.0) / 2)
    np.testing.assert_allclose(grad, [[1.0, 0.0], [0.0, 1.0]])


def test_flat_params_round_trip():
    net = MLPNet([3, 5, 2], seed=1)
    other = MLPNet([3, 5, 2], seed=2)
    other.load_flat(net.flat_params())
    x = np.random.default_rng(4).standard_normal((7, 3))
    np.testing.assert_array_equal(other(x), net(x))
    assert net.n_params == 3 * 5 + 5 + 5 * 2 + 2
    with pytest.raises(ConfigError):
        net.load_flat(np.zeros(3))


def test_same_seed_same_net():
    np.testing.assert_array_equal(MLPNet([2, 8, 2], seed=5).flat_params(), MLPNet([2, 8, 2], seed=5).flat_params())


def test_network_validation():
    with pytest.raises(ConfigError):
        MLPNet([2])
    with pytest.raises(ConfigError):
        MLPNet([2, 3], activation='relu')
    with pytest.raises(DomainError):
        MLPNet([2, 3]).forward(np.zeros((1, 4)))


def test_adamw_first_step():
    p = {'W': np.array([[1.0]]), 'b': np.array([0.0])}
    opt = AdamW([p], lr=0.1)
    opt.step([{'W': np.array([[0.5]]), 'b': np.array([-2.0])}])
    assert p['W'][0, 0] == pytest.approx(0.9, abs=1e-7)
    assert p['b'][0] == pytest.approx(0.1, abs=1e-7)


def test_adamw_decay_without_gradient():
    p = {'W': np.array([[1.0, -2.0]]), 'b': np.array([4.0])}
    opt = AdamW([p], lr=0.1, weight_decay=0.01)
    zero = {'W': np.zeros((1, 2)), 'b': np.zeros(1)}
    opt.step([zero])
    np.testing.assert_allclose(p['W'], [[0.999, -1.998]], rtol=1e-12)
    np.testing.assert_allclose(p['b'], [3.996], rtol=1e-12)


def test_adamw_validation():
    with pytest.raises(ConfigError):
        AdamW([], lr=0.0)
    with pytest.raises(ConfigError):
        AdamW([], lr=1e-3, weight_decay=-1.0)
