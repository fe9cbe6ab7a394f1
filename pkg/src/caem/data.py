"""Sensor CSV ingestion, normalization, windowing, splitting and noise injection.

CSV contract: UTF-8, comma-delimited, header row. Every column other than
the optional ``label`` (0 normal / 1 anomaly) and ``subject`` (string id)
columns is a signal. Empty cells, ``nan`` and non-finite numbers count as
missing; interior gaps of at most ``max_gap`` rows are linearly
interpolated and remaining missing rows are dropped.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (EmptyFile, FrameTooShort, IndivisibleWindow, MissingColumn, NonNumericCell,
                     RatioOutOfRange, SignalCountMismatch)

log = logging.getLogger("caem.data")

LABEL_COLUMN = "label"
SUBJECT_COLUMN = "subject"
STD_FLOOR = 1e-8
_MISSING = {"", "nan", "na", "null"}


@dataclass
class SignalFrame:
    """Rows are time samples, columns are signals."""

    names: list
    values: np.ndarray
    labels: np.ndarray | None = None
    subjects: np.ndarray | None = None
    source: str = ""
    malformed_rows: int = 0
    dropped_rows: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.names):
            raise ValueError(f"values {self.values.shape} do not match {len(self.names)} names")
        for extra in (self.labels, self.subjects):
            if extra is not None and len(extra) != len(self.values):
                raise ValueError("label/subject columns must match the number of rows")

    @property
    def n_signals(self):
        return len(self.names)

    def __len__(self):
        return len(self.values)

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            header = list(self.names)
            if self.labels is not None:
                header.append(LABEL_COLUMN)
            if self.subjects is not None:
                header.append(SUBJECT_COLUMN)
            w.writerow(header)
            for i, row in enumerate(self.values):
                out = [repr(float(v)) for v in row]
                if self.labels is not None:
                    out.append(int(self.labels[i]))
                if self.subjects is not None:
                    out.append(self.subjects[i])
                w.writerow(out)


def _parse_cell(cell, row, column):
    text = cell.strip()
    if text.lower() in _MISSING:
        return math.nan
    try:
        v = float(text)
    except ValueError:
        raise NonNumericCell(row, column, cell) from None
    return v if math.isfinite(v) else math.nan


def interpolate_gaps(values, max_gap=3):
    """Linearly fill interior NaN runs of length <= ``max_gap``, per column."""
    out = values.copy()
    n = len(out)
    for j in range(out.shape[1]):
        col = out[:, j]
        missing = np.isnan(col)
        i = 0
        while i < n:
            if not missing[i]:
                i += 1
                continue
            k = i
            while k < n and missing[k]:
                k += 1
            if 0 < i and k < n and k - i <= max_gap:
                lo, hi = col[i - 1], col[k]
                steps = np.arange(1, k - i + 1) / (k - i + 1)
                col[i:k] = lo + (hi - lo) * steps
            i = k
    return out


def load_csv(path, signals=None, label_column=LABEL_COLUMN, subject_column=SUBJECT_COLUMN, max_gap=3):
    """Read a sensor CSV into a :class:`SignalFrame`.

    Rows with the wrong number of fields are skipped and counted in
    ``malformed_rows``. :class:`NonNumericCell` reports the 0-based data row.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyFile(f"{path}: no header row")
        header = [h.strip() for h in header]
        extras = {label_column, subject_column}
        if signals is None:
            signals = [h for h in header if h not in extras]
        missing = [s for s in signals if s not in header]
        if missing:
            raise MissingColumn(f"{path}: missing columns {missing}")
        if not signals:
            raise MissingColumn(f"{path}: no signal columns")
        sig_idx = [header.index(s) for s in signals]
        lab_idx = header.index(label_column) if label_column in header else None
        sub_idx = header.index(subject_column) if subject_column in header else None

        rows, labels, subjects = [], [], []
        malformed = 0
        for r, rec in enumerate(reader):
            if not rec or (len(rec) == 1 and not rec[0].strip()):
                continue
            if len(rec) != len(header):
                malformed += 1
                continue
            rows.append([_parse_cell(rec[i], r, header[i]) for i in sig_idx])
            if lab_idx is not None:
                cell = rec[lab_idx].strip()
                labels.append(int(float(cell)) if cell else 0)
            if sub_idx is not None:
                subjects.append(rec[sub_idx].strip())
    if not rows:
        raise EmptyFile(f"{path}: no data rows")
    if malformed:
        log.warning("%s: skipped %d malformed rows", path, malformed)

    values = interpolate_gaps(np.array(rows, dtype=np.float64), max_gap)
    keep = ~np.isnan(values).any(axis=1)
    dropped = int(np.sum(~keep))
    if dropped:
        log.warning("%s: dropped %d rows with unfillable gaps", path, dropped)
    return SignalFrame(
        list(signals), values[keep],
        np.array(labels, dtype=np.int64)[keep] if lab_idx is not None else None,
        np.array(subjects, dtype=object)[keep] if sub_idx is not None else None,
        str(path), malformed, dropped,
    )


@dataclass(frozen=True)
class Normalizer:
    """Per-signal z-score statistics."""

    mean: tuple
    std: tuple

    @classmethod
    def fit(cls, values):
        values = np.asarray(values, dtype=np.float64)
        mu = values.mean(axis=0)
        sd = np.maximum(values.std(axis=0), STD_FLOOR)
        return cls(tuple(float(v) for v in mu), tuple(float(v) for v in sd))

    @classmethod
    def fit_windows(cls, windows):
        """Statistics over every element of (count, h, N, t) windows, per signal."""
        arr = np.asarray(windows, dtype=np.float64)
        n = arr.shape[2]
        return cls.fit(arr.transpose(0, 1, 3, 2).reshape(-1, n))

    def apply(self, values):
        return (np.asarray(values, dtype=np.float64) - np.array(self.mean)) / np.array(self.std)

    def apply_windows(self, windows):
        arr = np.asarray(windows, dtype=np.float64)
        if arr.shape[-2] != len(self.mean):
            raise SignalCountMismatch(f"windows carry {arr.shape[-2]} signals, normalizer {len(self.mean)}")
        return (arr - np.array(self.mean)[:, None]) / np.array(self.std)[:, None]

    def to_dict(self):
        return {"mean": list(self.mean), "std": list(self.std)}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(float(v) for v in d["mean"]), tuple(float(v) for v in d["std"]))


@dataclass(frozen=True)
class WindowedSample:
    """One model input of shape (h, N, t) and the row where it starts."""

    data: np.ndarray
    source: str = ""
    start: int = 0

    @property
    def origin(self):
        return (self.source, self.start)


def window_starts(n_rows, window_length, stride):
    if n_rows < window_length:
        raise FrameTooShort(f"{n_rows} rows cannot hold a window of {window_length}")
    return list(range(0, n_rows - window_length + 1, stride))


def make_windows(frame, window_length, time_steps, stride=None):
    """Slide a length-T window and reshape each to (h, N, T/h).

    ``frame`` is a :class:`SignalFrame` or a (rows, N) array. Stride
    defaults to T (non-overlapping); a trailing partial window is dropped.
    """
    if window_length % time_steps:
        raise IndivisibleWindow(f"window length {window_length} is not divisible by {time_steps} steps")
    stride = window_length if stride is None else stride
    if stride < 1:
        raise ValueError("stride must be at least 1")
    values = frame.values if isinstance(frame, SignalFrame) else np.asarray(frame, dtype=np.float64)
    source = frame.source if isinstance(frame, SignalFrame) else ""
    n = values.shape[1]
    t = window_length // time_steps
    out = []
    for s in window_starts(len(values), window_length, stride):
        block = values[s:s + window_length]
        out.append(WindowedSample(np.ascontiguousarray(block.T.reshape(n, time_steps, t).transpose(1, 0, 2)),
                                  source, s))
    return out


def unwindow(sample):
    """Inverse of the window reshape: (h, N, t) -> (h*t, N) rows."""
    data = sample.data if isinstance(sample, WindowedSample) else np.asarray(sample)
    h, n, t = data.shape
    return data.transpose(1, 0, 2).reshape(n, h * t).T


def window_labels(frame, windows, window_length):
    """A window is anomalous (1) if any of its rows is labelled anomalous."""
    if frame.labels is None:
        return None
    return np.array([int(frame.labels[w.start:w.start + window_length].max()) for w in windows], dtype=np.int64)


def window_subjects(frame, windows, window_length):
    """Subject of each window, or None where a window spans several subjects."""
    if frame.subjects is None:
        return None
    out = []
    for w in windows:
        ids = set(frame.subjects[w.start:w.start + window_length])
        out.append(ids.pop() if len(ids) == 1 else None)
    return out


def augment_windows(frame, windows, chosen, window_length, time_steps, stride):
    """Extra overlapping windows lying wholly inside the rows of ``windows[chosen]``.

    Used for training-set augmentation: every returned window starts on a
    multiple of ``stride`` and covers only rows that already belong to the
    chosen windows, so it never overlaps rows held out for validation or test.
    """
    if stride < 1:
        raise ValueError("stride must be at least 1")
    n_rows = len(frame.values if isinstance(frame, SignalFrame) else frame)
    covered = np.zeros(n_rows + 1, dtype=np.int64)
    for i in chosen:
        covered[windows[i].start + 1:windows[i].start + window_length + 1] += 1
    inside = np.cumsum(covered[1:] > 0)
    inside = np.concatenate([[0], inside])
    values = frame.values if isinstance(frame, SignalFrame) else np.asarray(frame, dtype=np.float64)
    source = frame.source if isinstance(frame, SignalFrame) else ""
    n, t = values.shape[1], window_length // time_steps
    out = []
    for s in range(0, n_rows - window_length + 1, stride):
        if inside[s + window_length] - inside[s] == window_length:
            block = values[s:s + window_length]
            out.append(WindowedSample(np.ascontiguousarray(block.T.reshape(n, time_steps, t).transpose(1, 0, 2)),
                                      source, s))
    return out


def stack_windows(windows):
    return np.stack([w.data if isinstance(w, WindowedSample) else w for w in windows])


@dataclass(frozen=True)
class SplitSpec:
    mode: str = "ratio"
    ratios: tuple = (5, 1, 4)
    seed: int = 0
    holdout_subject: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "ratios", tuple(int(r) for r in self.ratios))
        if self.mode not in ("ratio", "loso"):
            raise ValueError(f"split mode must be 'ratio' or 'loso', got {self.mode!r}")
        if len(self.ratios) != 3 or min(self.ratios) <= 0 or sum(self.ratios) != 10:
            raise ValueError(f"ratios must be three positive parts summing to 10, got {self.ratios}")
        if self.mode == "loso" and self.holdout_subject is None:
            raise ValueError("loso split needs holdout_subject")


@dataclass
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {"train": self.train.tolist(), "val": self.val.tolist(), "test": self.test.tolist()}


def _ratio_parts(idx, ratios, rng):
    idx = np.asarray(idx, dtype=np.int64)
    perm = idx[rng.permutation(len(idx))]
    total = sum(ratios)
    n_train = len(idx) * ratios[0] // total
    n_val = len(idx) * ratios[1] // total
    return np.sort(perm[:n_train]), np.sort(perm[n_train:n_train + n_val]), np.sort(perm[n_train + n_val:])


def split_windows(labels, spec=None, subjects=None):
    """Window indices for train / validation / test.

    Train and validation hold normal windows only; anomalous windows go to
    test. In ``loso`` mode the held-out subject's windows form the test set
    and the other subjects' normal windows are split by the first two ratio
    parts.
    """
    spec = spec or SplitSpec()
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(spec.seed)
    all_idx = np.arange(len(labels))
    if spec.mode == "ratio":
        train, val, test_normal = _ratio_parts(all_idx[labels == 0], spec.ratios, rng)
        test = np.sort(np.concatenate([test_normal, all_idx[labels == 1]]))
        return Split(train, val, test)
    if subjects is None:
        raise ValueError("loso split needs subject ids")
    subj = np.array([s if s is not None else "" for s in subjects], dtype=object)
    test = all_idx[subj == spec.holdout_subject]
    rest = all_idx[(subj != spec.holdout_subject) & (subj != "") & (labels == 0)]
    a, b = spec.ratios[0], spec.ratios[1]
    perm = rest[rng.permutation(len(rest))]
    n_train = len(rest) * a // (a + b)
    return Split(np.sort(perm[:n_train]), np.sort(perm[n_train:]), test,
                 {"holdout_subject": spec.holdout_subject})


def inject_noise(samples, ratio, mu=0.0, sigma=0.3, seed=0):
    """Add N(mu, sigma^2) noise to every element of round(ratio * count) samples.

    Returns ``(noisy_copy, chosen_indices)``; the other samples are untouched.
    """
    if not 0.0 <= ratio <= 0.3:
        raise RatioOutOfRange(f"noise ratio must lie in [0, 0.3], got {ratio}")
    arr = np.array(stack_windows(samples) if isinstance(samples, list) else samples, dtype=np.float64)
    count = int(math.floor(ratio * len(arr) + 0.5))
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(len(arr), size=count, replace=False)) if count else np.zeros(0, np.int64)
    for i in chosen:
        arr[i] = arr[i] + rng.normal(mu, sigma, size=arr[i].shape)
    return arr, chosen
