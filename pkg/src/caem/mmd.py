"""Gaussian-kernel maximum mean discrepancy against a standard normal target."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import DimensionMismatch, TooFewSamples


@dataclass(frozen=True)
class MmdConfig:
    """``bandwidth`` is a positive float or ``"median"`` for the median heuristic.

    ``target_sample_count`` of None draws as many target points as latents.
    """

    bandwidth: float | str = "median"
    target_sample_count: int | None = None

    def __post_init__(self):
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "median":
                raise ValueError(f"bandwidth must be a positive float or 'median', got {self.bandwidth!r}")
        elif not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.target_sample_count is not None and self.target_sample_count < 2:
            raise ValueError("target_sample_count must be at least 2")


def gaussian_kernel(u, v, sigma):
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionMismatch(f"kernel arguments differ in shape: {u.shape} vs {v.shape}")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return float(np.exp(-np.sum((u - v) ** 2) / (2.0 * sigma * sigma)))


def median_bandwidth(a, b):
    """Median pairwise Euclidean distance over the pooled sample (1.0 if degenerate)."""
    joint = np.vstack([np.asarray(a), np.asarray(b)])
    diff = joint[:, None, :] - joint[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    iu = np.triu_indices(len(joint), k=1)
    med = float(np.median(dist[iu]))
    return med if med > 0 else 1.0


def draw_target(count, dim, seed):
    return np.random.default_rng(seed).standard_normal((count, dim))


def kernel_matrix(a, b, sigma):
    """Pairwise Gaussian kernel values k(a_i, b_j) as a differentiable tensor."""
    a, b = T.as_tensor(a), T.as_tensor(b)
    diff = a.reshape(a.shape[0], 1, a.shape[1]) - b.reshape(1, b.shape[0], b.shape[1])
    return T.exp(T.scale(T.sumsq(diff, axis=2), -1.0 / (2.0 * sigma * sigma)))


def mmd_penalty(latents, config=None, seed=0, target=None):
    """Biased (V-statistic) empirical MMD^2 between ``latents`` and N(0, I) samples.

    All pairs are summed, diagonals included, each mean normalized by its
    pair count, so a sample set compared with itself gives exactly zero. The
    bandwidth is a constant with respect to gradients.
    """
    config = config or MmdConfig()
    latents = T.as_tensor(latents)
    if latents.ndim != 2:
        raise DimensionMismatch(f"latents must be (count, dim), got {latents.shape}")
    count, dim = latents.shape
    if count < 2:
        raise TooFewSamples(f"MMD needs at least 2 latent rows, got {count}")
    if target is None:
        target = draw_target(config.target_sample_count or count, dim, seed)
    target = np.asarray(target, dtype=np.float64)
    if target.ndim != 2 or target.shape[1] != dim:
        raise DimensionMismatch(f"target {target.shape} does not match latent dim {dim}")
    if config.bandwidth == "median":
        sigma = median_bandwidth(latents.data, target)
    else:
        sigma = float(config.bandwidth)
    kxx = T.mean(kernel_matrix(latents, latents, sigma))
    kyy = T.mean(kernel_matrix(target, target, sigma))
    kxy = T.mean(kernel_matrix(latents, target, sigma))
    return kxx + kyy - T.scale(kxy, 2.0)
