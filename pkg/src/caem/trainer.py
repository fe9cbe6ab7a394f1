"""Mini-batch training of the compound objective with early stopping."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import tensor as T
from .errors import ConfigError, EmptyDataset, NonFiniteError
from .optim import Adam

log = logging.getLogger("caem.trainer")

TRACE_COLUMNS = ("epoch", "mse", "mmd", "np", "lp", "total", "val_total")
TERMS = ("mse", "mmd", "np", "lp", "total")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    max_epochs: int = 100
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    patience: int = 10
    clip_norm: float | None = None

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2")
        if self.learning_rate <= 0 or self.eps <= 0:
            raise ConfigError("learning_rate and eps must be positive")
        if self.max_epochs < 1 or self.patience < 1:
            raise ConfigError("max_epochs and patience must be at least 1")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ConfigError("clip_norm must be positive")

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    train: dict
    val: dict | None


@dataclass
class TrainTrace:
    records: list = field(default_factory=list)
    wall_time: float = 0.0
    best_epoch: int = 0

    def val_totals(self):
        return [r.val["total"] if r.val else r.train["total"] for r in self.records]

    def epochs_to_within(self, fraction=0.05):
        """First epoch whose validation total is within ``fraction`` of the best."""
        totals = self.val_totals()
        best = min(totals)
        for rec, v in zip(self.records, totals):
            if v <= best + fraction * abs(best):
                return rec.epoch
        return None

    def rows(self):
        for r in self.records:
            val_total = r.val["total"] if r.val else float("nan")
            yield [r.epoch] + [r.train[k] for k in TERMS] + [val_total]

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for row in self.rows():
                w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])

    @classmethod
    def read_csv(cls, path):
        trace = cls()
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
                raise ValueError(f"{path}: expected columns {TRACE_COLUMNS}, got {reader.fieldnames}")
            for row in reader:
                train = {k: float(row[k]) for k in TERMS}
                val = float(row["val_total"])
                trace.records.append(EpochRecord(int(row["epoch"]), train,
                                                 None if np.isnan(val) else {"total": val}))
        totals = trace.val_totals()
        if totals:
            trace.best_epoch = trace.records[int(np.argmin(totals))].epoch
        return trace


def _stack(samples):
    return np.stack([np.asarray(getattr(s, "data", s), dtype=np.float64) for s in samples])


def batch_slices(n, batch_size):
    """Full batches only; a set smaller than one batch forms a single batch."""
    if n < batch_size:
        return [slice(0, n)]
    return [slice(i, i + batch_size) for i in range(0, n - batch_size + 1, batch_size)]


def _eval_slices(n, batch_size):
    """Cover every sample; a short tail is merged into the previous chunk."""
    bounds = list(range(0, n, batch_size)) + [n]
    if len(bounds) > 2 and bounds[-1] - bounds[-2] < 2:
        bounds.pop(-2)
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]


def evaluate_loss(model, data, batch_size=32, mmd_seed=0):
    """Sample-weighted mean LossBreakdown values with dropout off."""
    data = _stack(data) if not isinstance(data, np.ndarray) else data
    totals = dict.fromkeys(TERMS, 0.0)
    base = [int(v) for v in np.atleast_1d(mmd_seed)]
    with T.no_grad():
        for k, sl in enumerate(_eval_slices(len(data), batch_size)):
            chunk = data[sl]
            vals = model.compound_loss(chunk, None, mmd_seed=base + [k]).values()
            for key in TERMS:
                totals[key] += vals[key] * len(chunk)
    return {k: v / len(data) for k, v in totals.items()}


def fit(model, train, val=None, config=None, on_epoch=None):
    """Train ``model`` in place; returns ``(model, trace)``.

    The parameters at the epoch of lowest validation total loss (training
    total when there is no validation set) are restored before returning.
    Permutations come from ``default_rng([seed, 0])``; dropout masks and MMD
    targets from per-(epoch, batch) seeds, so a run is a pure function of the
    seed.
    """
    config = config or TrainConfig()
    train = _stack(train) if not isinstance(train, np.ndarray) else train
    if len(train) < 2:
        raise EmptyDataset(f"need at least 2 training samples, got {len(train)}")
    if val is not None:
        val = _stack(val) if not isinstance(val, np.ndarray) else val
        if len(val) < 2:
            raise EmptyDataset(f"need at least 2 validation samples, got {len(val)}")

    params = model.parameters()
    opt = Adam(params, config.learning_rate, config.beta1, config.beta2, config.eps, config.clip_norm)
    order_rng = np.random.default_rng([config.seed, 0])
    trace = TrainTrace()
    best_total, best_state, stale = np.inf, model.state_dict(), 0
    start = time.perf_counter()

    for epoch in range(1, config.max_epochs + 1):
        perm = order_rng.permutation(len(train))
        sums = dict.fromkeys(TERMS, 0.0)
        slices = batch_slices(len(train), config.batch_size)
        for b, sl in enumerate(slices):
            batch = train[perm[sl]]
            opt.zero_grad()
            try:
                loss = model.compound_loss(batch, np.random.default_rng([config.seed, 1, epoch, b]),
                                           mmd_seed=[config.seed, 2, epoch, b])
            except NonFiniteError as exc:
                raise NonFiniteError(f"epoch {epoch}, batch {b}: {exc}", term=exc.term) from exc
            T.backward(loss.total)
            opt.step()
            for key, v in loss.values().items():
                sums[key] += v
        train_vals = {k: v / len(slices) for k, v in sums.items()}
        val_vals = evaluate_loss(model, val, config.batch_size, mmd_seed=[config.seed, 3]) if val is not None else None
        for key, v in list(train_vals.items()) + list((val_vals or {}).items()):
            if not np.isfinite(v):
                raise NonFiniteError(f"epoch {epoch}: non-finite {key}", term=key)
        trace.records.append(EpochRecord(epoch, train_vals, val_vals))
        monitor = val_vals["total"] if val_vals else train_vals["total"]
        log.info("epoch %d train_total=%.6g val_total=%s", epoch, train_vals["total"],
                 f"{val_vals['total']:.6g}" if val_vals else "-")
        if on_epoch is not None:
            on_epoch(epoch, train_vals, val_vals)
        if monitor < best_total:
            best_total, best_state, stale = monitor, model.state_dict(), 0
            trace.best_epoch = epoch
        else:
            stale += 1
            if stale >= config.patience:
                break

    model.load_state_dict(best_state)
    trace.wall_time = time.perf_counter() - start
    return model, trace
