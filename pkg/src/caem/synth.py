"""Synthetic multi-sensor streams with labelled anomaly regimes.

Normal regime. Every signal mixes a periodic driver (three harmonics of a
common period) seen through a fixed per-signal lag and gain with a second
periodic driver at a fixed per-signal weight. All signals share one clock: a
random start phase plus a slow AR(1) time warp. On top sits AR(1)
measurement noise whose level drifts slowly.

Optionally (``q_gain > 0``) a narrowband stochastic component Q, a resonant
AR(2) process, couples the signals across time: the first ``leaders``
signals carry Q(t) and the rest carry Q(t - lag).

The stochastic parts scale with ``noise``, so with ``noise=0`` every column
is exactly periodic.

Anomaly regimes change one property each:

* ``amplitude``: the whole stream scaled by ``amplitude_factor``;
* ``frequency``: every frequency scaled by ``frequency_factor``;
* ``decoupled``: every signal runs on its own clock (independent start
  phase and time warp), and followers get an independent realization of Q.
  Per-signal spectra are unchanged; the cross-signal coupling is gone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import SignalFrame
from .errors import BadSpec

REGIMES = ("normal", "amplitude", "frequency", "decoupled")


@dataclass(frozen=True)
class SynthSpec:
    n_signals: int = 6
    length: int = 4000
    regime: str = "normal"
    noise: float = 0.1
    amplitude_factor: float = 5.0
    frequency_factor: float = 1.6
    period: int = 256
    periodic_gain: float = 1.0
    lag: int = 20
    leaders: int | None = None
    q_period: float = 24.0
    q_radius: float = 0.95
    q_gain: float = 0.0
    structure_seed: int = 1234

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise BadSpec(f"unknown regime {self.regime!r}; expected one of {REGIMES}")
        if self.n_signals < 1 or self.length < 1 or self.period < 2:
            raise BadSpec("n_signals and length must be positive and period at least 2")
        if self.noise < 0 or self.q_gain < 0 or self.periodic_gain < 0 or self.amplitude_factor <= 0 or self.frequency_factor <= 0:
            raise BadSpec("noise and q_gain must be >= 0 and factors positive")
        if self.leaders is not None and not 1 <= self.leaders <= self.n_signals:
            raise BadSpec("leaders must lie in [1, n_signals]")
        if self.lag < 0 or not 0 < self.q_radius < 1 or self.q_period <= 2:
            raise BadSpec("lag must be >= 0, q_radius in (0, 1) and q_period > 2")


_HARMONICS_1 = np.array([5.0, 11.0, 19.0])
_AMPS_1 = np.array([1.0, 0.6, 0.4])
_HARMONICS_2 = np.array([3.0, 7.0])
_AMPS_2 = np.array([0.8, 0.5])
_BURN_IN = 500


def _structure(spec):
    rng = np.random.default_rng(spec.structure_seed)
    n = spec.n_signals
    return {
        "lag": rng.integers(0, spec.period // 4, size=n).astype(np.float64),
        "gain": rng.uniform(0.6, 1.4, size=n),
        "mix": rng.uniform(-0.8, 0.8, size=n),
        "q_gain": rng.uniform(0.7, 1.3, size=n) * rng.choice([-1.0, 1.0], size=n),
        "phase1": rng.uniform(0, 2 * np.pi, size=len(_HARMONICS_1)),
        "phase2": rng.uniform(0, 2 * np.pi, size=len(_HARMONICS_2)),
    }


def _ar1(rng, length, phi, stationary_std, size=None):
    shape = (length,) if size is None else (length, size)
    out = np.zeros(shape)
    if stationary_std == 0:
        return out
    innov = stationary_std * np.sqrt(1 - phi * phi)
    eps = rng.standard_normal(shape) * innov
    out[0] = rng.standard_normal(shape[1:]) * stationary_std
    for i in range(1, length):
        out[i] = phi * out[i - 1] + eps[i]
    return out


def resonant_process(rng, length, period, radius):
    """Unit-variance AR(2) with poles at ``radius * exp(+-2j*pi/period)``."""
    a1 = 2.0 * radius * np.cos(2.0 * np.pi / period)
    a2 = -radius * radius
    var = (1 - a2) / ((1 + a2) * ((1 - a2) ** 2 - a1 * a1))
    eps = rng.standard_normal(length + _BURN_IN) / np.sqrt(var)
    out = np.zeros(length + _BURN_IN)
    for i in range(2, len(out)):
        out[i] = a1 * out[i - 1] + a2 * out[i - 2] + eps[i]
    return out[_BURN_IN:]


def _driver(tau, harmonics, amps, phases, period):
    arg = 2 * np.pi * np.multiply.outer(tau, harmonics) / period + phases
    return np.sum(amps * np.sin(arg), axis=-1)


def synth_generate(spec=None, seed=0, **overrides):
    """Generate one stream; returns ``(frame, labels)``.

    Labels are 0 for the normal regime and 1 for every anomaly regime.
    """
    spec = spec or SynthSpec()
    if overrides:
        spec = SynthSpec(**{**spec.__dict__, **overrides})
    st = _structure(spec)
    rng = np.random.default_rng(seed)
    n, length, p = spec.n_signals, spec.length, spec.period
    freq = spec.frequency_factor if spec.regime == "frequency" else 1.0

    base = np.arange(length, dtype=np.float64)
    warp_std = 30.0 * spec.noise
    if spec.regime == "decoupled":
        # every signal follows its own clock: same spectra, no shared phase
        tau = base[:, None] + rng.uniform(0, p, size=n) + _ar1(rng, length, 0.995, warp_std, size=n)
        tau2 = base[:, None] + rng.uniform(0, p, size=n) + _ar1(rng, length, 0.995, warp_std, size=n)
    else:
        tau = (base + rng.uniform(0, p) + _ar1(rng, length, 0.995, warp_std))[:, None] * np.ones(n)
        tau2 = tau
    s1 = _driver(tau - st["lag"], freq * _HARMONICS_1, _AMPS_1, st["phase1"], p)
    s2 = _driver(tau2, freq * _HARMONICS_2, _AMPS_2, st["phase2"], p)
    values = spec.periodic_gain * (st["gain"] * s1 + st["mix"] * s2)

    if spec.noise > 0 and spec.q_gain > 0:
        leaders = max(1, n // 2) if spec.leaders is None else spec.leaders
        q = resonant_process(rng, length + spec.lag, spec.q_period / freq, spec.q_radius)
        if spec.regime == "decoupled":
            q_follow = resonant_process(rng, length + spec.lag, spec.q_period / freq, spec.q_radius)
        else:
            q_follow = q
        stochastic = np.empty((length, n))
        stochastic[:, :leaders] = q[spec.lag:, None]
        stochastic[:, leaders:] = q_follow[:length, None]
        values = values + spec.q_gain * spec.noise * st["q_gain"] * stochastic
    if spec.noise > 0:
        level = spec.noise * np.exp(_ar1(rng, length, 0.999, 0.5))
        values = values + level[:, None] * _ar1(rng, length, 0.7, 1.0, size=n)
    if spec.regime == "amplitude":
        values = values * spec.amplitude_factor

    labels = np.full(length, 0 if spec.regime == "normal" else 1, dtype=np.int64)
    names = [f"s{j}" for j in range(n)]
    return SignalFrame(names, values, labels, None, f"synth:{spec.regime}"), labels


def make_benchmark(n_signals=6, window_length=80, n_normal=400, anomalies=None, noise=0.1, seed=0,
                   structure_seed=1234, **spec_overrides):
    """Concatenate a normal stream and anomalous streams on window boundaries.

    ``anomalies`` maps regime name to window count (default 50 amplitude and
    50 decoupled). Returns ``(frame, regimes)`` with one regime name per
    window of length ``window_length`` at stride ``window_length``.
    """
    anomalies = {"amplitude": 50, "decoupled": 50} if anomalies is None else dict(anomalies)
    parts, labels, regimes = [], [], []
    plan = [("normal", n_normal)] + [(r, c) for r, c in anomalies.items()]
    for k, (regime, count) in enumerate(plan):
        if count <= 0:
            continue
        spec = SynthSpec(n_signals=n_signals, length=count * window_length, regime=regime, noise=noise,
                         structure_seed=structure_seed, **spec_overrides)
        frame, lab = synth_generate(spec, seed=[seed, k])
        parts.append(frame.values)
        labels.append(lab)
        regimes.extend([regime] * count)
    frame = SignalFrame([f"s{j}" for j in range(n_signals)], np.concatenate(parts), np.concatenate(labels),
                        None, f"synth-benchmark:{seed}")
    return frame, regimes
