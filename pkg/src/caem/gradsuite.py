"""Finite-difference gradient suite on a miniature model.

Every layer is checked in isolation through a random linear read-out
``sum(out * R)``, both for its parameters and for its input. Each loss term
is then checked end to end on the miniature model (N=3, t=8, h=3, d=4, M=2)
with dropout masks, MMD target and kernel bandwidth held fixed, so the
objective is a deterministic smooth function of the parameters.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import layers as L
from . import tensor as T
from .gradcheck import check_parameters, relative_error, resolution_floor
from .model import CAEM, ModelConfig
from .tensor import Tensor, backward, no_grad

LAYER_TOL = 1e-4
TERM_TOL = 1e-4
TOTAL_TOL = 1e-3
STEP = 1e-5
TERMS = ("mse", "mmd", "np", "lp")


def miniature_config(**overrides):
    base = dict(n_signals=3, sub_window=8, time_steps=3, latent_dim=4, conv_channels=(2, 3),
                deconv_channels=(3, 2), kernel=4, pool=2, lstm_hidden=4, dense_hidden=5,
                dropout=0.2, mmd_bandwidth=1.0, seed=0)
    base.update(overrides)
    return ModelConfig(**base)


def miniature_model(seed=0, **overrides):
    """Miniature model with every parameter (biases included) randomized.

    Random biases move ReLU pre-activations off zero, where central
    differences would straddle a kink.
    """
    model = CAEM(miniature_config(seed=seed, **overrides))
    rng = np.random.default_rng([seed, 99])
    for _, p in model.named_parameters():
        if p.data.ndim == 1:
            p.data[...] = rng.uniform(-0.3, 0.3, size=p.shape)
    return model


def miniature_batch(seed=0, m=2, config=None):
    cfg = config or miniature_config()
    return np.random.default_rng([seed, 7]).standard_normal((m, cfg.time_steps, cfg.n_signals, cfg.sub_window))


@dataclass
class SuiteResult:
    name: str
    max_rel_error: float
    tol: float
    n_params: int

    @property
    def passed(self):
        return self.max_rel_error <= self.tol


def _readout(shape, rng):
    return Tensor(rng.standard_normal(shape))


def _layer_check(name, build, x_shape, seed, step=STEP, tol=LAYER_TOL):
    rng = np.random.default_rng(seed)
    layer_fn, params = build(rng)
    x = Tensor(rng.standard_normal(x_shape), requires_grad=True)
    with no_grad():
        out_shape = layer_fn(x).shape
    r = _readout(out_shape, rng)
    res = check_parameters(lambda: T.sum_(layer_fn(x) * r), list(params) + [x], step, tol, "auto")
    return SuiteResult(name, res.max_rel_error, tol, sum(p.size for p in params) + x.size)


def _randomize_bias(module, rng):
    for _, p in module.named_parameters():
        if p.data.ndim == 1:
            p.data[...] = rng.uniform(-0.3, 0.3, size=p.shape)
    return module


def layer_checks(seed=0):
    out = []

    def conv(rng):
        layer = _randomize_bias(L.Conv2DLayer(2, 3, 4, activation="relu", rng=rng), rng)
        return layer, layer.parameters()
    out.append(_layer_check("conv2d", conv, (2, 2, 3, 8), seed))

    def conv_strided(rng):
        layer = _randomize_bias(L.Conv2DLayer(1, 2, (3, 2), stride=(2, 1), padding=(1, 0, 0, 1),
                                              activation="linear", rng=rng), rng)
        return layer, layer.parameters()
    out.append(_layer_check("conv2d_strided", conv_strided, (2, 1, 5, 6), seed))

    def deconv(rng):
        layer = _randomize_bias(L.ConvTranspose2DLayer(3, 2, 4, stride=2, activation="relu", rng=rng), rng)
        return (lambda x: layer(x, (3, 8))), layer.parameters()
    out.append(_layer_check("conv_transpose2d", deconv, (2, 3, 1, 4), seed))

    out.append(_layer_check("maxpool2d", lambda rng: ((lambda x: L.maxpool2d(x, (2, 2))), []),
                            (2, 2, 4, 6), seed))

    def dense(rng):
        layer = _randomize_bias(L.Dense(6, 4, "relu", rng=rng), rng)
        return layer, layer.parameters()
    out.append(_layer_check("dense", dense, (3, 6), seed))

    def bilstm(rng):
        layer = _randomize_bias(L.BiLstmLayer(5, 4, rng=rng), rng)
        return layer, layer.parameters()
    out.append(_layer_check("bilstm", bilstm, (2, 3, 5), seed))

    def attention(rng):
        head = _randomize_bias(L.AttentionHead(4, 3, rng=rng), rng)
        return head, head.parameters()
    out.append(_layer_check("attention", attention, (2, 3, 4), seed))

    def ar(rng):
        model = _randomize_bias(L.ArModel(2, 5, rng=rng), rng)
        return model, model.parameters()
    out.append(_layer_check("ar", ar, (2, 2, 5), seed))

    def dropout(rng):
        return (lambda x: L.dropout(x, 0.3, np.random.default_rng(seed))), []
    out.append(_layer_check("dropout", dropout, (3, 5), seed))
    return out


def _term_values(model, x, mmd_target, dropout_seed):
    loss = model.compound_loss(x, np.random.default_rng(dropout_seed), mmd_target=mmd_target)
    return loss


def term_checks(seed=0, step=STEP, model=None, x=None):
    """Check every loss term and the total with one shared numeric sweep."""
    model = model or miniature_model(seed)
    cfg = model.config
    x = miniature_batch(seed, 2, cfg) if x is None else x
    target = np.random.default_rng([seed, 11]).standard_normal((x.shape[0] * cfg.time_steps, cfg.latent_dim))
    params = model.parameters()
    names = TERMS + ("total",)

    analytic, floors = {}, {}
    for name in names:
        for p in params:
            p.zero_grad()
        value = getattr(_term_values(model, x, target, seed), name)
        floors[name] = value.item()
        if value.requires_grad:  # a switched-off term is a constant zero
            backward(value)
        analytic[name] = [np.zeros(p.shape) if p.grad is None else p.grad.copy() for p in params]

    numeric = {name: [np.zeros(p.shape) for p in params] for name in names}
    with no_grad():
        for k, p in enumerate(params):
            flat = p.data.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                plus = _term_values(model, x, target, seed).values()
                flat[i] = orig - step
                minus = _term_values(model, x, target, seed).values()
                flat[i] = orig
                for name in names:
                    numeric[name][k].reshape(-1)[i] = (plus[name] - minus[name]) / (2 * step)

    n = sum(p.size for p in params)
    out = []
    for name in names:
        tol = TOTAL_TOL if name == "total" else TERM_TOL
        floor = resolution_floor(floors[name], step, tol)
        err = max(relative_error(a, b, floor) for a, b in zip(analytic[name], numeric[name]))
        out.append(SuiteResult(f"loss:{name}", err, tol, n))
    return out


def per_parameter_errors(seed=0, term="total", step=STEP):
    """Max relative error of one term per named parameter (diagnostics)."""
    model = miniature_model(seed)
    cfg = model.config
    x = miniature_batch(seed, 2, cfg)
    target = np.random.default_rng([seed, 11]).standard_normal((x.shape[0] * cfg.time_steps, cfg.latent_dim))
    named = list(model.named_parameters())
    res = check_parameters(lambda: getattr(_term_values(model, x, target, seed), term),
                           [p for _, p in named], step, np.inf)
    return {name: relative_error(a, b) for (name, _), a, b in zip(named, res.analytic, res.numeric)}


def run_suite(seed=0):
    """All layer and loss-term checks; returns ``(results, seconds)``."""
    start = time.perf_counter()
    results = layer_checks(seed) + term_checks(seed)
    return results, time.perf_counter() - start
