"""Adam with bias correction, plus global-norm gradient clipping."""

from __future__ import annotations

import math

import numpy as np

from .errors import StateMismatch


class AdamState:
    def __init__(self, shapes):
        self.step = 0
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]


def adam_step(params, grads, state, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """Update ``params`` (arrays, in place) from ``grads``; returns ``state``."""
    if not (len(params) == len(grads) == len(state.m)):
        raise StateMismatch(f"{len(params)} params, {len(grads)} grads, {len(state.m)} moment slots")
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise StateMismatch(f"shape mismatch: param {p.shape}, grad {g.shape}, moment {m.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return state


class Adam:
    """Optimizer over a fixed, ordered list of parameter tensors."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, clip_norm=None):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.clip_norm = clip_norm
        self.state = AdamState([p.shape for p in self.params])

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        grads = [np.zeros(p.shape) if p.grad is None else p.grad for p in self.params]
        if self.clip_norm is not None:
            grads = clip_by_global_norm(grads, self.clip_norm)
        adam_step([p.data for p in self.params], grads, self.state,
                  self.lr, self.beta1, self.beta2, self.eps)


def global_norm(grads):
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads))


def clip_by_global_norm(grads, max_norm):
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return grads
    factor = max_norm / norm
    return [g * factor for g in grads]
