# -*- coding: utf-8 -*-
from types import SimpleNamespace

import numpy as np
import pytest

from config import TrainConfig
from core.tensor import Tensor, backward
from errors import ConfigError
from optim import SGD, Adam, make_optimizer


def quadratic(param):
    return (param * param).sum()


def test_sgd_step():
    param = Tensor(np.array([1., -2.]), requires_grad=True)
    optimizer = SGD([param], lr=0.1)
    backward(quadratic(param))
    optimizer.step()
    assert np.allclose(param.data, [0.8, -1.6])


def test_sgd_momentum_accumulates():
    param = Tensor(np.array([1.]), requires_grad=True)
    optimizer = SGD([param], lr=0.1, momentum=0.5)
    for _ in range(2):
        optimizer.zero_grad()
        backward(quadratic(param))
        optimizer.step()
    # velocity 2.0, then 0.5 * 2.0 + 1.6
    assert param.data[0] == pytest.approx(1. - 0.2 - 0.26)


def test_adam_first_step_is_lr_sized():
    param = Tensor(np.array([3., -0.01]), requires_grad=True)
    optimizer = Adam([param], lr=0.05)
    backward(quadratic(param))
    optimizer.step()
    assert np.allclose(param.data, [2.95, 0.04], atol=1e-6)


def test_adam_converges():
    param = Tensor(np.array([2., -3.]), requires_grad=True)
    optimizer = Adam([param], lr=0.1)
    for _ in range(500):
        optimizer.zero_grad()
        backward(quadratic(param))
        optimizer.step()
    assert np.all(np.abs(param.data) < 0.2)


def test_frozen_and_gradless_params_are_skipped():
    live = Tensor(np.ones(2), requires_grad=True)
    frozen = Tensor(np.ones(2), requires_grad=True)
    untouched = Tensor(np.ones(2), requires_grad=True)
    optimizer = Adam([live, frozen, untouched], lr=0.1)
    backward(quadratic(live) + quadratic(frozen))
    frozen.requires_grad = False
    optimizer.step()
    assert np.all(live.data < 1.)
    assert np.array_equal(frozen.data, np.ones(2))
    assert np.array_equal(untouched.data, np.ones(2))


def test_make_optimizer():
    param = Tensor(np.ones(2), requires_grad=True)
    assert isinstance(make_optimizer(TrainConfig(), [param]), Adam)
    sgd = make_optimizer(TrainConfig(optimizer='sgd', momentum=0.3), [param])
    assert isinstance(sgd, SGD) and sgd.momentum == 0.3
    with pytest.raises(ConfigError):
        make_optimizer(SimpleNamespace(optimizer='rmsprop', lr=0.1), [param])
