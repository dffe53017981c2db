""" Adam with bias correction and the inverse-time learning-rate schedule. """
from dataclasses import dataclass, field

import numpy as np

from ..errors import HorizonSegError


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state, lr):
    """ Update `params` (name -> array) in place from `grads` and advance `state`. """
    for name, grad in grads.items():
        if name not in params:
            raise KeyError(f'gradient for unknown parameter {name!r}')
        if params[name].shape != np.shape(grad):
            raise ValueError(f'gradient shape {np.shape(grad)} does not match parameter {name!r}')
        if not np.isfinite(grad).all():
            raise HorizonSegError(f'non-finite gradient for parameter {name!r}')
    state.step += 1
    t = state.step
    correction1 = 1 - state.beta1 ** t
    correction2 = 1 - state.beta2 ** t
    for name, grad in grads.items():
        p = params[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= state.beta1
        m += (1 - state.beta1) * grad
        v *= state.beta2
        v += (1 - state.beta2) * np.square(grad)
        update = (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        p -= (lr * update).astype(p.dtype)
    return params, state


def lr_inverse_time(base_lr, iteration, decay_rate):
    return base_lr / (1.0 + decay_rate * iteration)
