"""Decision threshold, classification and macro precision/recall/F1."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInput, LengthMismatch, NonFiniteError, SingleClassTruth

NORMAL, ANOMALY = 0, 1
LABEL_NAMES = {NORMAL: "normal", ANOMALY: "anomaly"}
REPORT_COLUMNS = ("index", "source", "start", "score", "label", "truth")


@dataclass(frozen=True)
class Threshold:
    thr: float
    mean: float
    std: float
    n_train: int

    def to_dict(self):
        return {"thr": self.thr, "mean": self.mean, "std": self.std, "n_train": self.n_train}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["thr"]), float(d["mean"]), float(d["std"]), int(d["n_train"]))


def compute_threshold(scores):
    """Mean plus one population standard deviation of training scores."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    if s.size == 0:
        raise EmptyInput("threshold needs at least one score")
    if not np.isfinite(s).all():
        raise NonFiniteError("non-finite training score")
    mu = float(np.mean(s))
    std = float(np.sqrt(np.mean((s - mu) ** 2)))
    return Threshold(mu + std, mu, std, int(s.size))


def classify(scores, thr):
    """1 (anomaly) where score > thr, else 0; a score equal to thr is normal."""
    if isinstance(thr, Threshold):
        thr = thr.thr
    if not math.isfinite(thr):
        raise ValueError("threshold must be finite")
    s = np.asarray(scores, dtype=np.float64)
    if not np.isfinite(s).all():
        raise NonFiniteError("non-finite score")
    return (s > thr).astype(np.int64)


def confusion(labels, truth):
    labels = np.asarray(labels, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    return {
        "tp": int(np.sum((labels == 1) & (truth == 1))),
        "fp": int(np.sum((labels == 1) & (truth == 0))),
        "tn": int(np.sum((labels == 0) & (truth == 0))),
        "fn": int(np.sum((labels == 0) & (truth == 1))),
    }


def _ratio(num, den):
    return num / den if den else 0.0


def _f1(p, r):
    return 2 * p * r / (p + r) if p + r else 0.0


def evaluate(labels, truth):
    """Per-class and macro-averaged precision, recall and F1.

    Zero denominators yield 0.
    """
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    truth = np.asarray(truth, dtype=np.int64).reshape(-1)
    if labels.shape != truth.shape:
        raise LengthMismatch(f"{labels.size} labels vs {truth.size} truth values")
    if len(np.unique(truth)) < 2:
        raise SingleClassTruth("ground truth must contain both classes")
    cm = confusion(labels, truth)
    per_class = {
        "anomaly": {"precision": _ratio(cm["tp"], cm["tp"] + cm["fp"]),
                    "recall": _ratio(cm["tp"], cm["tp"] + cm["fn"])},
        "normal": {"precision": _ratio(cm["tn"], cm["tn"] + cm["fn"]),
                   "recall": _ratio(cm["tn"], cm["tn"] + cm["fp"])},
    }
    for v in per_class.values():
        v["f1"] = _f1(v["precision"], v["recall"])
    return {
        "confusion": cm,
        "per_class": per_class,
        "mPre": (per_class["normal"]["precision"] + per_class["anomaly"]["precision"]) / 2,
        "mRec": (per_class["normal"]["recall"] + per_class["anomaly"]["recall"]) / 2,
        "mF1": (per_class["normal"]["f1"] + per_class["anomaly"]["f1"]) / 2,
    }


@dataclass
class DetectionReport:
    scores: np.ndarray
    labels: np.ndarray
    threshold: Threshold
    truth: np.ndarray | None = None
    origins: list = field(default_factory=list)
    metrics: dict | None = None

    @classmethod
    def build(cls, scores, threshold, truth=None, origins=None):
        scores = np.asarray(scores, dtype=np.float64)
        labels = classify(scores, threshold)
        metrics = None
        if truth is not None:
            truth = np.asarray(truth, dtype=np.int64)
            if len(np.unique(truth)) == 2:
                metrics = evaluate(labels, truth)
        return cls(scores, labels, threshold, truth, list(origins or []), metrics)

    @property
    def anomaly_rate(self):
        return float(np.mean(self.labels)) if len(self.labels) else 0.0

    def write_csv(self, path):
        """One row per window: index,source,start,score,label,truth."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_COLUMNS)
            for i, (score, label) in enumerate(zip(self.scores, self.labels)):
                source, start = self.origins[i] if i < len(self.origins) else ("", "")
                truth = "" if self.truth is None else int(self.truth[i])
                w.writerow([i, source, start, repr(float(score)), LABEL_NAMES[int(label)], truth])

    def summary(self):
        out = {
            "threshold": self.threshold.to_dict(),
            "n_windows": int(len(self.scores)),
            "n_anomalies": int(np.sum(self.labels)),
            "anomaly_rate": self.anomaly_rate,
        }
        if self.metrics is not None:
            out.update(self.metrics)
        return out

    def write_summary(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def read_report(path):
    """Load (scores, labels, truth-or-None) from a report CSV."""
    scores, labels, truth = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
            raise ValueError(f"{path}: expected columns {REPORT_COLUMNS}")
        for row in reader:
            scores.append(float(row["score"]))
            labels.append(ANOMALY if row["label"] == "anomaly" else NORMAL)
            truth.append(row["truth"])
    has_truth = all(t != "" for t in truth) and truth
    return (np.array(scores), np.array(labels, dtype=np.int64),
            np.array([int(t) for t in truth], dtype=np.int64) if has_truth else None)
