"""End-to-end steps shared by the command line and the test-suite:
load -> window -> split -> normalize -> train -> threshold -> detect.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import config as C
from .data import (Normalizer, SplitSpec, augment_windows, inject_noise, load_csv, make_windows, split_windows, stack_windows,
                   window_labels, window_subjects)
from .detector import DetectionReport, Threshold, compute_threshold
from .errors import DataError, FormatError, SignalCountMismatch
from .model import CAEM, ModelConfig
from .serialize import load_checkpoint, save_checkpoint
from .synth import make_benchmark
from .trainer import fit

log = logging.getLogger("caem.pipeline")


@dataclass
class Prepared:
    names: list
    normalizer: Normalizer
    split: object
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    test_truth: np.ndarray | None
    test_origins: list
    noisy: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))


@dataclass
class TrainedRun:
    model: CAEM
    trace: object
    threshold: Threshold
    prepared: Prepared
    train_scores: np.ndarray


def load_frame(cfg):
    """The configured CSV, or the synthetic benchmark when no path is set."""
    d = cfg["data"]
    if d["path"] is None:
        s = dict(cfg["synth"])
        base = [s.pop(k) for k in ("n_signals", "n_normal", "anomalies", "noise", "structure_seed")]
        frame, _ = make_benchmark(base[0], d["window_length"], base[1], base[2], base[3], cfg["seed"], base[4], **s)
        return frame
    return read_frame(d["path"], d["signals"], d["max_gap"])


def read_frame(path, signals=None, max_gap=3):
    if not os.path.isfile(path):
        raise DataError(f"data file not found: {path}")
    return load_csv(path, signals=signals, max_gap=max_gap)


def window_frame(frame, cfg):
    d = cfg["data"]
    windows = make_windows(frame, d["window_length"], cfg["model"]["time_steps"], d["stride"])
    labels = window_labels(frame, windows, d["window_length"])
    return windows, labels


def prepare(cfg, frame=None):
    """Window, split and normalize.

    With ``data.train_stride`` set, the training part is re-cut at that
    stride inside the rows of the training windows (augmentation). Noise, if
    configured, is injected into training windows only.
    """
    frame = load_frame(cfg) if frame is None else frame
    windows, labels = window_frame(frame, cfg)
    truth = labels if labels is not None else np.zeros(len(windows), np.int64)
    subjects = window_subjects(frame, windows, cfg["data"]["window_length"])
    sp = cfg["split"]
    split = split_windows(truth, SplitSpec(sp["mode"], tuple(sp["ratios"]), cfg["seed"], sp["holdout_subject"]),
                          subjects)
    raw = stack_windows(windows)
    normalizer = Normalizer.fit_windows(raw[split.train])
    data = normalizer.apply_windows(raw)
    train = data[split.train]
    if cfg["data"]["train_stride"] is not None:
        extra = augment_windows(frame, windows, split.train, cfg["data"]["window_length"],
                                cfg["model"]["time_steps"], cfg["data"]["train_stride"])
        train = normalizer.apply_windows(stack_windows(extra))
    noisy = np.zeros(0, np.int64)
    nz = cfg["noise"]
    if nz["ratio"] > 0:
        train, noisy = inject_noise(train, nz["ratio"], nz["mu"], nz["sigma"], seed=[cfg["seed"], 4])
    return Prepared(list(frame.names), normalizer, split, train, data[split.val], data[split.test],
                    labels[split.test] if labels is not None else None,
                    [windows[i].origin for i in split.test], noisy)


def train(cfg, prepared=None, on_epoch=None):
    prepared = prepare(cfg) if prepared is None else prepared
    mcfg = C.model_config(cfg, len(prepared.names))
    model = CAEM(mcfg)
    val = prepared.val if len(prepared.val) >= 2 else None
    model, trace = fit(model, prepared.train, val, C.train_config(cfg), on_epoch=on_epoch)
    scores = model.sample_scores(prepared.train)
    threshold = compute_threshold(scores)
    log.info("trained %d epochs (best %d); threshold %.6g", len(trace.records), trace.best_epoch, threshold.thr)
    return TrainedRun(model, trace, threshold, prepared, scores)


def detect(model, threshold, data, truth=None, origins=None):
    return DetectionReport.build(model.sample_scores(data), threshold, truth, origins)


def run_experiment(cfg, frame=None):
    """Train on the split's train part and report on its test part."""
    run = train(cfg, prepare(cfg, frame))
    p = run.prepared
    report = detect(run.model, run.threshold, p.test, p.test_truth, p.test_origins)
    return run, report


# -- checkpoints ----------------------------------------------------------------
def checkpoint_meta(cfg, run):
    return {
        "format": "caem-checkpoint",
        "model": run.model.config.to_dict(),
        "threshold": run.threshold.to_dict(),
        "normalizer": run.prepared.normalizer.to_dict(),
        "signals": run.prepared.names,
        "window": {"length": cfg["data"]["window_length"], "stride": cfg["data"]["stride"],
                   "time_steps": cfg["model"]["time_steps"]},
        "variant": cfg["variant"],
    }


def save_run_checkpoint(path, cfg, run):
    return save_checkpoint(path, checkpoint_meta(cfg, run), run.model.state_dict())


@dataclass
class LoadedModel:
    model: CAEM
    threshold: Threshold
    normalizer: Normalizer
    signals: list
    window: dict
    meta: dict


def load_model(path):
    if not os.path.isfile(path):
        raise DataError(f"checkpoint not found: {path}")
    meta, state = load_checkpoint(path)
    if meta.get("format") != "caem-checkpoint":
        raise FormatError(f"{path}: not a CAE-M checkpoint")
    model = CAEM(ModelConfig.from_dict(meta["model"]))
    model.load_state_dict(state)
    return LoadedModel(model, Threshold.from_dict(meta["threshold"]), Normalizer.from_dict(meta["normalizer"]),
                       meta["signals"], meta["window"], meta)


def detect_frame(loaded, frame):
    """Score every window of ``frame`` with a loaded checkpoint."""
    if frame.n_signals != len(loaded.signals):
        raise SignalCountMismatch(f"input has {frame.n_signals} signals, checkpoint expects {len(loaded.signals)}")
    w = loaded.window
    windows = make_windows(frame, w["length"], w["time_steps"], w["stride"])
    labels = window_labels(frame, windows, w["length"])
    data = loaded.normalizer.apply_windows(stack_windows(windows))
    return detect(loaded.model, loaded.threshold, data, labels, [x.origin for x in windows])
