"""CAE-M: characterization network (conv autoencoder) feeding a memory network.

Per window of shape (h, N, t) every time step is encoded as a 1-channel
N x t image. The encoder is conv -> pool -> conv -> pool -> dense(d); the
decoder mirrors it with a dense expansion and three transposed convolutions.
The latent code of a step is ``[z_f, z_r]`` where ``z_r`` is the squared L2
reconstruction error of that step. The memory network predicts the last
step's code from the previous ``h - 1`` codes twice: through a BiLSTM with
temporal attention (non-linear path) and through a dense autoregression
(linear path).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from . import layers as L
from . import tensor as T
from .errors import ConfigError, NonFiniteError, ShapeMismatch, TooFewSamples, TooFewSteps
from .mmd import MmdConfig, mmd_penalty
from .tensor import Tensor


@dataclass(frozen=True)
class ModelConfig:
    n_signals: int
    sub_window: int
    time_steps: int = 5
    latent_dim: int = 16
    conv_channels: tuple = (32, 64)
    deconv_channels: tuple = (64, 32)
    kernel: int = 4
    pool: int = 2
    lstm_hidden: int = 512
    attention_dim: int | None = None
    dense_hidden: int = 1000
    dropout: float = 0.2
    lambda_mmd: float = 1e-4
    lambda_nonlinear: float = 0.5
    lambda_linear: float = 0.5
    use_attention: bool = True
    use_ar: bool = True
    recon_in_latent: bool = True
    score_recon: bool = True
    mmd_bandwidth: float | str = "median"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "conv_channels", tuple(self.conv_channels))
        object.__setattr__(self, "deconv_channels", tuple(self.deconv_channels))
        if self.n_signals < 1 or self.sub_window < 1:
            raise ConfigError("n_signals and sub_window must be positive")
        if self.time_steps < 2:
            raise TooFewSteps(f"time_steps must be at least 2, got {self.time_steps}")
        if not 0 < self.latent_dim < self.n_signals * self.sub_window:
            raise ConfigError(f"latent_dim must lie in (0, N*t) = (0, {self.n_signals * self.sub_window})")
        if len(self.conv_channels) != 2 or len(self.deconv_channels) != 2:
            raise ConfigError("conv_channels and deconv_channels each take two widths")
        if min(self.lambda_mmd, self.lambda_nonlinear, self.lambda_linear) < 0:
            raise ConfigError("loss weights must be nonnegative")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout must lie in [0, 1)")
        MmdConfig(self.mmd_bandwidth)

    @property
    def window_length(self):
        return self.time_steps * self.sub_window

    @property
    def code_dim(self):
        return self.latent_dim + (1 if self.recon_in_latent else 0)

    def to_dict(self):
        d = asdict(self)
        d["conv_channels"] = list(self.conv_channels)
        d["deconv_channels"] = list(self.deconv_channels)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class LossBreakdown:
    """The four objective terms and their weighted sum (tensors)."""

    mse: Tensor
    mmd: Tensor
    np: Tensor
    lp: Tensor
    total: Tensor

    def values(self):
        return {k: getattr(self, k).item() for k in ("mse", "mmd", "np", "lp", "total")}


def _term(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except NonFiniteError as exc:
        raise NonFiniteError(f"non-finite value in loss term '{name}': {exc}", term=name) from exc


def _pool_size(extent, pool):
    return pool if extent >= pool else 1


class CAEM(L.Module):
    def __init__(self, config: ModelConfig):
        self.config = config
        cfg = config
        rng = np.random.default_rng(cfg.seed)
        c1, c2 = cfg.conv_channels
        dc1, dc2 = cfg.deconv_channels
        k = cfg.kernel

        self.conv1 = L.Conv2DLayer(1, c1, k, activation="relu", rng=rng)
        h0, w0 = self.conv1.output_extent(cfg.n_signals, cfg.sub_window)
        self._pool1 = (_pool_size(h0, cfg.pool), _pool_size(w0, cfg.pool))
        h1, w1 = h0 // self._pool1[0], w0 // self._pool1[1]
        self.conv2 = L.Conv2DLayer(c1, c2, k, activation="relu", rng=rng)
        h1c, w1c = self.conv2.output_extent(h1, w1)
        self._pool2 = (_pool_size(h1c, cfg.pool), _pool_size(w1c, cfg.pool))
        h2, w2 = h1c // self._pool2[0], w1c // self._pool2[1]
        self._extents = {"input": (cfg.n_signals, cfg.sub_window), "pool1": (h1, w1), "pool2": (h2, w2)}
        self._bottleneck = (c2, h2, w2)
        flat = c2 * h2 * w2

        self.enc_dense = L.Dense(flat, cfg.latent_dim, "linear", rng=rng)
        self.dec_dense = L.Dense(cfg.latent_dim, flat, "relu", rng=rng)
        self.deconv1 = L.ConvTranspose2DLayer(c2, dc1, k, stride=self._pool2, activation="relu", rng=rng)
        self.deconv2 = L.ConvTranspose2DLayer(dc1, dc2, k, stride=self._pool1, activation="relu", rng=rng)
        self.deconv3 = L.ConvTranspose2DLayer(dc2, 1, k, stride=1, activation="linear", rng=rng)

        dim = cfg.code_dim
        self.bilstm = L.BiLstmLayer(dim, cfg.lstm_hidden, rng=rng)
        if cfg.use_attention:
            self.attention = L.AttentionHead(cfg.lstm_hidden, cfg.attention_dim, rng=rng)
        if cfg.dense_hidden:
            self.head_hidden = L.Dense(cfg.lstm_hidden, cfg.dense_hidden, "linear", rng=rng)
            self.head_out = L.Dense(cfg.dense_hidden, dim, "linear", rng=rng)
        else:
            self.head_out = L.Dense(cfg.lstm_hidden, dim, "linear", rng=rng)
        if cfg.use_ar:
            self.ar = L.ArModel(cfg.time_steps - 1, dim, rng=rng)

    # -- parameters ------------------------------------------------------
    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        own = dict(self.named_parameters())
        if set(own) != set(state):
            missing, extra = set(own) - set(state), set(state) - set(own)
            raise ShapeMismatch(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ShapeMismatch(f"{name}: expected {p.shape}, got {arr.shape}")
            p.data[...] = arr

    # -- characterization network ----------------------------------------
    def encode(self, images):
        a = L.maxpool2d(self.conv1(images), self._pool1)
        a = L.maxpool2d(self.conv2(a), self._pool2)
        return self.enc_dense(a.reshape(a.shape[0], -1))

    def decode(self, z_f):
        c2, h2, w2 = self._bottleneck
        a = self.dec_dense(z_f).reshape(z_f.shape[0], c2, h2, w2)
        a = self.deconv1(a, self._extents["pool1"])
        a = self.deconv2(a, self._extents["input"])
        return self.deconv3(a, self._extents["input"])

    def _check_batch(self, x):
        cfg = self.config
        x = T.as_tensor(x)
        if x.ndim == 3:
            x = x.reshape((1,) + x.shape)
        if x.ndim != 4 or x.shape[1:] != (cfg.time_steps, cfg.n_signals, cfg.sub_window):
            raise ShapeMismatch(
                f"expected windows of shape (batch, {cfg.time_steps}, {cfg.n_signals}, {cfg.sub_window}),"
                f" got {x.shape}")
        return x

    def characterize(self, x):
        """Encode and reconstruct every time step.

        Returns ``(z_f, z_r, x_rec, mse)`` with shapes (M, h, d), (M, h),
        (M, h, N, t) and (M,); ``mse`` is the per-sample mean over steps of
        the squared L2 reconstruction error.
        """
        x = self._check_batch(x)
        m, h, n, t = x.shape
        images = x.reshape(m * h, 1, n, t)
        z_f = _term("mse", self.encode, images)
        rec = _term("mse", self.decode, z_f)
        z_r = T.sumsq(rec - images, axis=(1, 2, 3))
        z_r = z_r.reshape(m, h)
        mse = T.mean(z_r, axis=1)
        return z_f.reshape(m, h, -1), z_r, rec.reshape(m, h, n, t), mse

    def latent_codes(self, z_f, z_r):
        if not self.config.recon_in_latent:
            return z_f
        m, h, _ = z_f.shape
        return T.concat([z_f, z_r.reshape(m, h, 1)], axis=2)

    # -- memory network ----------------------------------------------------
    def predict_next(self, past, dropout_rng=None):
        """Predict the next code from ``past`` of shape (M, h - 1, D).

        Returns ``(Y, z_hat)``; ``z_hat`` is None without the AR path.
        """
        past = T.as_tensor(past)
        if past.ndim == 2:
            past = past.reshape((1,) + past.shape)
        if past.shape[1] < 1:
            raise TooFewSteps("prediction needs at least one past step")
        states = self.bilstm(past)
        if self.config.use_attention:
            context = self.attention(states)
        else:
            context = states[:, -1, :]
        context = L.dropout(context, self.config.dropout, dropout_rng)
        if self.config.dense_hidden:
            context = self.head_hidden(context)
        y = self.head_out(context)
        z_hat = self.ar(past) if self.config.use_ar else None
        return y, z_hat

    def attention_weights(self, past):
        states = self.bilstm(T.as_tensor(past))
        return self.attention.weights(states)

    # -- objective -----------------------------------------------------------
    def _per_sample_terms(self, x, dropout_rng):
        z_f, z_r, _, mse = self.characterize(x)
        codes = self.latent_codes(z_f, z_r)
        past, target = codes[:, :-1, :], codes[:, -1, :]
        y, z_hat = _term("np", self.predict_next, past, dropout_rng)
        np_err = _term("np", T.sumsq, y - target, axis=1)
        if z_hat is not None:
            lp_err = _term("lp", T.sumsq, z_hat - target, axis=1)
        else:
            lp_err = Tensor(np.zeros(mse.shape))
        return z_f, mse, np_err, lp_err

    def compound_loss(self, x, dropout_rng=None, mmd_seed=0, mmd_target=None):
        """Batch objective ``mse + l_mmd*mmd + l_nonlinear*np + l_linear*lp``.

        ``dropout_rng`` of None disables dropout. The MMD target is drawn
        from ``mmd_seed`` unless ``mmd_target`` is given.
        """
        cfg = self.config
        x = self._check_batch(x)
        if x.shape[0] < 2:
            raise TooFewSamples(f"compound loss needs a batch of at least 2, got {x.shape[0]}")
        z_f, mse_i, np_i, lp_i = self._per_sample_terms(x, dropout_rng)
        mse = T.mean(mse_i)
        pooled = z_f.reshape(-1, cfg.latent_dim)
        mmd = _term("mmd", mmd_penalty, pooled, MmdConfig(cfg.mmd_bandwidth), mmd_seed, mmd_target)
        np_term = T.mean(np_i)
        lp_term = T.mean(lp_i)
        total = (mse + T.scale(mmd, cfg.lambda_mmd) + T.scale(np_term, cfg.lambda_nonlinear)
                 + T.scale(lp_term, cfg.lambda_linear))
        return LossBreakdown(mse, mmd, np_term, lp_term, total)

    def score_terms(self, x):
        """Per-sample (mse, np, lp) arrays with dropout off and no tape."""
        with T.no_grad():
            _, mse, np_i, lp_i = self._per_sample_terms(self._check_batch(x), None)
        return mse.data.copy(), np_i.data.copy(), lp_i.data.copy()

    def sample_scores(self, x, chunk=256):
        """Anomaly score per window: ``mse + l_nonlinear*np + l_linear*lp``.

        The batch-level MMD term is excluded.
        """
        cfg = self.config
        x = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
        if x.ndim == 3:
            x = x[None]
        out = []
        for start in range(0, len(x), chunk):
            mse, np_i, lp_i = self.score_terms(x[start:start + chunk])
            score = cfg.lambda_nonlinear * np_i + cfg.lambda_linear * lp_i
            if cfg.score_recon:
                score = mse + score
            out.append(score)
        scores = np.concatenate(out) if out else np.zeros(0)
        if not np.isfinite(scores).all():
            raise NonFiniteError("non-finite anomaly score", term="score")
        return scores

    def sample_score(self, x):
        return float(self.sample_scores(x)[0])
