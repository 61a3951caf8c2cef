# -*- coding: utf-8 -*-
"""
First-order optimizers over lists of parameter Tensors.
"""

import numpy as np

from errors import ConfigError


class Optimizer(object):
    def __init__(self, params, lr):
        self.params = list(params)
        self.lr = lr

    def zero_grad(self):
        for param in self.params:
            param.zero_grad()

    def step(self):
        """Update every parameter that has a gradient."""
        for index, param in enumerate(self.params):
            if param.grad is None or not param.requires_grad:
                continue
            self.update(index, param)

    def update(self, index, param):
        raise NotImplementedError


class SGD(Optimizer):
    def __init__(self, params, lr, momentum=0.):
        Optimizer.__init__(self, params, lr)
        self.momentum = momentum
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def update(self, index, param):
        velocity = self.momentum * self.velocity[index] + param.grad
        self.velocity[index] = velocity
        param.data -= self.lr * velocity


class Adam(Optimizer):
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        Optimizer.__init__(self, params, lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.first = [np.zeros_like(p.data) for p in self.params]
        self.second = [np.zeros_like(p.data) for p in self.params]
        self.steps = [0] * len(self.params)

    def update(self, index, param):
        self.steps[index] += 1
        step = self.steps[index]
        grad = param.grad
        self.first[index] = (self.beta1 * self.first[index] +
                             (1. - self.beta1) * grad)
        self.second[index] = (self.beta2 * self.second[index] +
                              (1. - self.beta2) * grad * grad)
        first = self.first[index] / (1. - self.beta1 ** step)
        second = self.second[index] / (1. - self.beta2 ** step)
        param.data -= self.lr * first / (np.sqrt(second) + self.eps)


def make_optimizer(config, params):
    """Optimizer named by config.optimizer over 'params'."""
    if config.optimizer == 'adam':
        return Adam(params, config.lr, config.beta1, config.beta2)
    if config.optimizer == 'sgd':
        return SGD(params, config.lr, config.momentum)
    raise ConfigError('Unknown optimizer: {0}'.format(config.optimizer))
