"""Neural building blocks of the characterization and memory networks.

Convolution, transposed convolution and max pooling are differentiable
primitives built on the kernels in :mod:`caem._kernels`. Layers are thin
parameter holders; ``named_parameters`` yields parameters in attribute
definition order, which is also the serialization order.
"""

from __future__ import annotations

import math

import numpy as np

from . import _kernels
from . import tensor as T
from .errors import ShapeMismatch
from .tensor import Tensor


def _pair(v):
    return (v, v) if isinstance(v, int) else tuple(v)


def same_padding(kernel):
    """(top, bottom, left, right) padding that keeps extents at stride 1.

    The odd pixel for even kernels goes to the bottom/right.
    """
    kh, kw = _pair(kernel)
    return ((kh - 1) // 2, kh - 1 - (kh - 1) // 2, (kw - 1) // 2, kw - 1 - (kw - 1) // 2)


def conv_output_size(size, kernel, stride, pad_total):
    return (size + pad_total - kernel) // stride + 1


# -- primitives ----------------------------------------------------------

def conv2d(x, w, b=None, stride=1, padding=(0, 0, 0, 0)):
    """Cross-correlation of (B, C, H, W) input with (O, C, kh, kw) kernels."""
    x, w = T.as_tensor(x), T.as_tensor(w)
    sh, sw = _pair(stride)
    pt, pb, pl, pr = padding
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeMismatch(f"conv2d: input {x.shape} vs kernels {w.shape}")
    bsz, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    hp, wp = h + pt + pb, wd + pl + pr
    ho, wo = (hp - kh) // sh + 1, (wp - kw) // sw + 1
    if hp < kh or wp < kw or ho < 1 or wo < 1:
        raise ShapeMismatch(f"conv2d: kernel {kh}x{kw} does not fit padded input {hp}x{wp}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    cols = _kernels.im2col(xp, kh, kw, sh, sw)
    w2 = w.data.reshape(o, -1)
    out = np.matmul(w2, cols)
    parents = [x, w]
    if b is not None:
        b = T.as_tensor(b)
        if b.shape != (o,):
            raise ShapeMismatch(f"conv2d: bias {b.shape} for {o} output channels")
        out = out + b.data[:, None]
        parents.append(b)

    def backward_fn(g):
        g2 = g.reshape(bsz, o, ho * wo)
        gx = gw = None
        if x.requires_grad:
            gxp = _kernels.col2im(np.matmul(w2.T, g2), c, hp, wp, kh, kw, sh, sw)
            gx = gxp[:, :, pt:pt + h, pl:pl + wd]
        if w.requires_grad:
            gw = np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
        grads = [gx, gw]
        if b is not None:
            grads.append(g2.sum(axis=(0, 2)))
        return grads

    return T._result(out.reshape(bsz, o, ho, wo), parents, backward_fn, "conv2d")


def conv_transpose2d(y, w, b=None, stride=1, offset=(0, 0), output_size=None):
    """Adjoint of :func:`conv2d` with respect to its input.

    ``w`` has shape (O, C, kh, kw) and maps O input channels to C output
    channels. The full transposed result of extent ``(n - 1) * stride + k`` is
    cropped starting at ``offset`` to ``output_size`` (zero-filled past the
    end). With ``offset = (pt, pl)`` this is exactly the transpose of
    ``conv2d(., w, stride=stride, padding=(pt, *, pl, *))``.
    """
    y, w = T.as_tensor(y), T.as_tensor(w)
    sh, sw = _pair(stride)
    if y.ndim != 4 or w.ndim != 4 or y.shape[1] != w.shape[0]:
        raise ShapeMismatch(f"conv_transpose2d: input {y.shape} vs kernels {w.shape}")
    bsz, o, ho, wo = y.shape
    _, c, kh, kw = w.shape
    hf, wf = (ho - 1) * sh + kh, (wo - 1) * sw + kw
    h, wd = (hf, wf) if output_size is None else _pair(output_size)
    pt, pl = offset
    if pt < 0 or pl < 0 or h < 1 or wd < 1:
        raise ShapeMismatch(f"conv_transpose2d: bad offset {offset} or output size {(h, wd)}")
    # an offset past the full extent (all taps on padding) leaves zeros
    hr, wr = max(0, min(h, hf - pt)), max(0, min(wd, wf - pl))
    w2 = w.data.reshape(o, -1)
    y2 = y.data.reshape(bsz, o, ho * wo)
    full = _kernels.col2im(np.matmul(w2.T, y2), c, hf, wf, kh, kw, sh, sw)
    out = np.zeros((bsz, c, h, wd))
    out[:, :, :hr, :wr] = full[:, :, pt:pt + hr, pl:pl + wr]
    parents = [y, w]
    if b is not None:
        b = T.as_tensor(b)
        if b.shape != (c,):
            raise ShapeMismatch(f"conv_transpose2d: bias {b.shape} for {c} output channels")
        out += b.data[:, None, None]
        parents.append(b)

    def backward_fn(g):
        gfull = np.zeros((bsz, c, hf, wf))
        gfull[:, :, pt:pt + hr, pl:pl + wr] = g[:, :, :hr, :wr]
        gcols = _kernels.im2col(gfull, kh, kw, sh, sw)
        gy = np.matmul(w2, gcols).reshape(y.shape) if y.requires_grad else None
        gw = np.matmul(y2, gcols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape) if w.requires_grad else None
        grads = [gy, gw]
        if b is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    return T._result(out, parents, backward_fn, "conv_transpose2d")


def maxpool2d(x, pool=(2, 2)):
    """Non-overlapping max pooling, floor extents.

    Gradient goes to the first maximal element of each window in row-major
    order.
    """
    x = T.as_tensor(x)
    ph, pw = _pair(pool)
    if x.ndim != 4 or x.shape[2] < ph or x.shape[3] < pw:
        raise ShapeMismatch(f"maxpool2d: pool {ph}x{pw} larger than input {x.shape}")
    _, _, h, w = x.shape
    out, arg = _kernels.maxpool_forward(np.ascontiguousarray(x.data), ph, pw)
    return T._result(out, (x,),
                     lambda g: (_kernels.maxpool_backward(g, arg, h, w, ph, pw),), "maxpool2d")


def activate(x, activation):
    if activation == "relu":
        return T.relu(x)
    if activation == "linear":
        return x
    raise ValueError(f"unknown activation {activation!r}")


# -- layers --------------------------------------------------------------

def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Module:
    def named_parameters(self, prefix=""):
        for key, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + key, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{key}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]


class Conv2DLayer(Module):
    """Convolution with (out, in, kh, kw) kernels, bias and activation."""

    def __init__(self, in_channels, out_channels, kernel=4, stride=1, padding="same",
                 activation="relu", rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        kh, kw = _pair(kernel)
        self.stride = _pair(stride)
        self.padding = same_padding((kh, kw)) if padding == "same" else tuple(padding)
        self.activation = activation
        self.kernels = T.parameter(glorot_uniform(
            rng, (out_channels, in_channels, kh, kw), in_channels * kh * kw, out_channels * kh * kw))
        self.bias = T.parameter(np.zeros(out_channels))

    def __call__(self, x):
        return activate(conv2d(x, self.kernels, self.bias, self.stride, self.padding), self.activation)

    def output_extent(self, h, w):
        pt, pb, pl, pr = self.padding
        kh, kw = self.kernels.shape[2:]
        return (conv_output_size(h, kh, self.stride[0], pt + pb),
                conv_output_size(w, kw, self.stride[1], pl + pr))


class ConvTranspose2DLayer(Module):
    """Transposed convolution with (in, out, kh, kw) kernels.

    The result is center-cropped to the requested output extent.
    """

    def __init__(self, in_channels, out_channels, kernel=4, stride=1, activation="relu", rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        kh, kw = _pair(kernel)
        self.stride = _pair(stride)
        self.activation = activation
        self.kernels = T.parameter(glorot_uniform(
            rng, (in_channels, out_channels, kh, kw), in_channels * kh * kw, out_channels * kh * kw))
        self.bias = T.parameter(np.zeros(out_channels))

    def __call__(self, x, output_size):
        kh, kw = self.kernels.shape[2:]
        hf = (x.shape[2] - 1) * self.stride[0] + kh
        wf = (x.shape[3] - 1) * self.stride[1] + kw
        h, w = output_size
        offset = (max(0, (hf - h) // 2), max(0, (wf - w) // 2))
        out = conv_transpose2d(x, self.kernels, self.bias, self.stride, offset, (h, w))
        return activate(out, self.activation)


class Dense(Module):
    def __init__(self, in_features, out_features, activation="linear", rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.activation = activation
        self.weight = T.parameter(glorot_uniform(rng, (in_features, out_features), in_features, out_features))
        self.bias = T.parameter(np.zeros(out_features))

    def __call__(self, x):
        return activate(T.matmul(x, self.weight) + self.bias, self.activation)


class LstmDirection(Module):
    """One direction of the peephole LSTM.

    Gate blocks are stacked along the last axis in the order input, forget,
    output, candidate. ``W_z`` acts on the input, ``W_y`` on the previous
    hidden state and ``W_c`` on the previous cell state, for all four gates
    (candidate included).
    """

    def __init__(self, input_dim, hidden, rng, init_scale=0.08):
        self.hidden = hidden
        u = lambda *shape: rng.uniform(-init_scale, init_scale, size=shape)
        self.W_z = T.parameter(u(input_dim, 4 * hidden))
        self.W_y = T.parameter(u(hidden, 4 * hidden))
        self.W_c = T.parameter(u(hidden, 4 * hidden))
        self.b = T.parameter(np.zeros(4 * hidden))

    def __call__(self, seq):
        m, steps, _ = seq.shape
        hdim = self.hidden
        zx = T.matmul(seq, self.W_z)
        y = Tensor(np.zeros((m, hdim)))
        c = Tensor(np.zeros((m, hdim)))
        outs = []
        for s in range(steps):
            pre = zx[:, s, :] + T.matmul(y, self.W_y) + T.matmul(c, self.W_c) + self.b
            i = T.sigmoid(pre[:, :hdim])
            f = T.sigmoid(pre[:, hdim:2 * hdim])
            o = T.sigmoid(pre[:, 2 * hdim:3 * hdim])
            cand = T.tanh(pre[:, 3 * hdim:])
            c = f * c + i * cand
            y = o * T.tanh(c)
            outs.append(y)
        return T.stack(outs, axis=1)


class BiLstmLayer(Module):
    """Bidirectional LSTM with outputs merged by summation."""

    def __init__(self, input_dim, hidden, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.hidden = hidden
        self.forward = LstmDirection(input_dim, hidden, rng)
        self.backward = LstmDirection(input_dim, hidden, rng)

    def directions(self, seq):
        """Unmerged (forward, backward) outputs, both aligned to input time order."""
        seq = T.as_tensor(seq)
        squeeze = seq.ndim == 2
        if squeeze:
            seq = seq.reshape((1,) + seq.shape)
        if seq.ndim != 3 or seq.shape[1] < 1:
            raise ShapeMismatch(f"bilstm: expected (batch, steps, dim), got {seq.shape}")
        fwd = self.forward(seq)
        bwd = self.backward(seq[:, ::-1, :])[:, ::-1, :]
        if squeeze:
            fwd, bwd = fwd[0], bwd[0]
        return fwd, bwd

    def __call__(self, seq):
        fwd, bwd = self.directions(seq)
        return fwd + bwd


def bilstm_sequence(layer, inputs):
    return layer(inputs)


class AttentionHead(Module):
    """Temporal attention: per-step sigmoid scores, softmax over steps, weighted sum."""

    def __init__(self, hidden, attention_dim=None, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        a = attention_dim or hidden
        self.W_h = T.parameter(glorot_uniform(rng, (hidden, a), hidden, a))
        self.b_h = T.parameter(np.zeros(a))
        self.W_a = T.parameter(glorot_uniform(rng, (a, 1), a, 1))
        self.b_a = T.parameter(np.zeros(1))

    def weights(self, states):
        proj = T.tanh(T.matmul(states, self.W_h) + self.b_h)
        scores = T.sigmoid(T.matmul(proj, self.W_a) + self.b_a)
        return T.softmax(scores, axis=-2)

    def __call__(self, states):
        states = T.as_tensor(states)
        if states.ndim == 2:
            return self(states.reshape((1,) + states.shape))[0]
        if states.ndim != 3 or states.shape[1] < 1:
            raise ShapeMismatch(f"attention: expected (batch, steps, hidden), got {states.shape}")
        return T.sum_(self.weights(states) * states, axis=1)


def temporal_attention(head, states):
    return head(states)


class ArModel(Module):
    """Linear autoregression realized as one dense map over the flattened history."""

    def __init__(self, lags, dim, out_dim=None, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        out_dim = dim if out_dim is None else out_dim
        self.lags = lags
        self.dim = dim
        self.weight = T.parameter(glorot_uniform(rng, (lags * dim, out_dim), lags * dim, out_dim))
        self.bias = T.parameter(np.zeros(out_dim))

    @classmethod
    def from_lag_weights(cls, lag_weights, constant, dim):
        """Dense equivalent of ``c * sum(w) + sum_i w_i * z_{h-i}``.

        ``lag_weights[i - 1]`` multiplies the value ``i`` steps back.
        """
        lag_weights = np.asarray(lag_weights, dtype=np.float64)
        lags = len(lag_weights)
        model = cls(lags, dim)
        weight = np.zeros((lags * dim, dim))
        for p in range(lags):
            # position p holds z_{p+1}; it is lags - p steps behind the target
            weight[p * dim:(p + 1) * dim] = lag_weights[lags - p - 1] * np.eye(dim)
        model.weight.data[...] = weight
        model.bias.data[...] = np.asarray(constant, dtype=np.float64) * lag_weights.sum()
        return model

    def __call__(self, past):
        past = T.as_tensor(past)
        squeeze = past.ndim == 2
        if squeeze:
            past = past.reshape((1,) + past.shape)
        if past.ndim != 3 or past.shape[1:] != (self.lags, self.dim):
            raise ShapeMismatch(f"ar: expected (batch, {self.lags}, {self.dim}), got {past.shape}")
        flat = past.reshape(past.shape[0], self.lags * self.dim)
        out = T.matmul(flat, self.weight) + self.bias
        return out[0] if squeeze else out


def ar_predict(model, past):
    return model(past)


def dropout(x, rate, rng=None):
    """Inverted dropout; identity when ``rng`` is None or ``rate`` is 0."""
    if rng is None or rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * Tensor(keep)
