"""Adam and step-decayed SGD over :class:`ParamSet` gradients."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import ParamSet


@dataclass
class AdamState:
    """Adam with bias correction. beta1 defaults to the DCGAN convention."""

    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: ParamSet):
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, p in params.trainable():
        g = p.grad
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)


@dataclass
class SgdState:
    """Plain SGD whose learning rate drops by ``divisor`` at each decay epoch."""

    initial_lr: float = 0.1
    decay_epochs: tuple = (16, 24)
    divisor: float = 10.0

    def learning_rate(self, epoch: int) -> float:
        drops = sum(1 for d in self.decay_epochs if epoch >= d)
        return self.initial_lr / self.divisor**drops


def sgd_step(state: SgdState, params: ParamSet, epoch: int):
    lr = state.learning_rate(epoch)
    for _, p in params.trainable():
        if p.grad is not None:
            p.data -= lr * p.grad
