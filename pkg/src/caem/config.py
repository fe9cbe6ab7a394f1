"""Run configuration: one JSON document with model, train, split, mmd, data,
synth and noise sections plus a top-level seed and variant.

Unknown keys are rejected at every level. ``override`` applies dotted
``section.key=value`` assignments (values parsed as JSON when possible) so
every field can be set from the command line.
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import fields

from .errors import ConfigError, UnknownVariant
from .model import ModelConfig
from .trainer import TrainConfig

VARIANTS = ("full", "woPre", "woRecMMD", "woAttention", "woAR", "woMMD")

# Model fields filled from the data rather than the config file.
_DERIVED_MODEL_FIELDS = {"n_signals", "sub_window", "seed", "mmd_bandwidth"}

DEFAULTS = {
    "seed": 0,
    "variant": "full",
    "data": {
        "path": None,
        "detect_path": None,
        "window_length": 80,
        "stride": None,
        "train_stride": 10,
        "signals": None,
        "max_gap": 3,
    },
    "synth": {
        "n_signals": 6,
        "n_normal": 400,
        "anomalies": {"amplitude": 50, "decoupled": 50},
        "noise": 0.1,
        "periodic_gain": 1.0,
        "lag": 20,
        "leaders": None,
        "q_gain": 0.0,
        "q_radius": 0.95,
        "structure_seed": 1234,
    },
    "model": {
        "time_steps": 5,
        "latent_dim": 8,
        "conv_channels": [8, 16],
        "deconv_channels": [16, 8],
        "kernel": 4,
        "pool": 2,
        "lstm_hidden": 32,
        "attention_dim": None,
        "dense_hidden": 64,
        "dropout": 0.2,
        "lambda_mmd": 1e-4,
        "lambda_nonlinear": 0.5,
        "lambda_linear": 0.5,
        "use_attention": True,
        "use_ar": True,
        "recon_in_latent": True,
        "score_recon": True,
    },
    "train": {
        "batch_size": 32,
        "max_epochs": 40,
        "learning_rate": 1e-3,
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1e-8,
        "patience": 10,
        "clip_norm": 5.0,
    },
    "split": {"mode": "ratio", "ratios": [5, 1, 4], "holdout_subject": None},
    "mmd": {"bandwidth": "median"},
    "noise": {"ratio": 0.0, "mu": 0.0, "sigma": 0.3},
}

_MODEL_KEYS = {f.name for f in fields(ModelConfig)} - _DERIVED_MODEL_FIELDS
_TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"seed"}


def _check_keys(section, given, allowed):
    unknown = set(given) - set(allowed)
    if unknown:
        where = f"section '{section}'" if section else "top level"
        raise ConfigError(f"unknown config keys at {where}: {sorted(unknown)}")


def _merge(base, given, section=""):
    _check_keys(section, given, base)
    out = copy.deepcopy(base)
    for key, value in given.items():
        if isinstance(base[key], dict) and key != "anomalies":
            if not isinstance(value, dict):
                raise ConfigError(f"config section '{key}' must be an object")
            out[key] = _merge(base[key], value, key)
        else:
            out[key] = copy.deepcopy(value)
    return out


def validate(cfg):
    _check_keys("model", cfg["model"], _MODEL_KEYS)
    _check_keys("train", cfg["train"], _TRAIN_KEYS)
    if cfg["variant"] not in VARIANTS:
        raise UnknownVariant(f"unknown variant {cfg['variant']!r}; expected one of {VARIANTS}")
    if not isinstance(cfg["seed"], int) or isinstance(cfg["seed"], bool):
        raise ConfigError("seed must be an integer")
    return cfg


def load_config(path=None, overrides=()):
    """Defaults, then the file at ``path``, then dotted overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    base_dir = os.getcwd()
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                given = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(given, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        cfg = _merge(cfg, given)
        base_dir = os.path.dirname(os.path.abspath(path))
    for item in overrides:
        cfg = override(cfg, item)
    for key in ("path", "detect_path"):
        p = cfg["data"][key]
        if p is not None and not os.path.isabs(p):
            cfg["data"][key] = os.path.normpath(os.path.join(base_dir, p))
    return validate(cfg)


def from_dict(given):
    return validate(_merge(DEFAULTS, given))


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def override(cfg, assignment):
    """Apply one ``a.b=value`` assignment, returning a new config."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} must look like section.key=value")
    dotted, text = assignment.split("=", 1)
    keys = dotted.strip().split(".")
    out = copy.deepcopy(cfg)
    node, base = out, DEFAULTS
    for k in keys[:-1]:
        if k not in base or not isinstance(base[k], dict):
            raise ConfigError(f"unknown config section {dotted!r}")
        node, base = node[k], base[k]
    if keys[-1] not in base:
        raise ConfigError(f"unknown config key {dotted!r}")
    node[keys[-1]] = _parse_value(text)
    return out


def apply_variant(model_section, variant):
    """Return model settings for an ablation variant.

    * woPre: no prediction terms (score is reconstruction only).
    * woRecMMD: no MMD, latent codes without the reconstruction-error
      channel, reconstruction error left out of the score.
    * woAttention: last BiLSTM state instead of attention pooling.
    * woAR: linear predictor removed.
    * woMMD: MMD weight set to 0.
    """
    if variant not in VARIANTS:
        raise UnknownVariant(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    m = dict(model_section)
    if variant == "woPre":
        m.update(lambda_nonlinear=0.0, lambda_linear=0.0)
    elif variant == "woRecMMD":
        m.update(lambda_mmd=0.0, recon_in_latent=False, score_recon=False)
    elif variant == "woAttention":
        m.update(use_attention=False)
    elif variant == "woAR":
        m.update(lambda_linear=0.0, use_ar=False)
    elif variant == "woMMD":
        m.update(lambda_mmd=0.0)
    return m


def model_config(cfg, n_signals):
    """Build the :class:`ModelConfig` for a run with ``n_signals`` columns."""
    m = apply_variant(cfg["model"], cfg["variant"])
    window = cfg["data"]["window_length"]
    steps = m["time_steps"]
    if window % steps:
        from .errors import IndivisibleWindow
        raise IndivisibleWindow(f"window length {window} is not divisible by {steps} steps")
    for key in ("conv_channels", "deconv_channels"):
        m[key] = tuple(m[key])
    return ModelConfig(n_signals=n_signals, sub_window=window // steps, seed=cfg["seed"],
                       mmd_bandwidth=cfg["mmd"]["bandwidth"], **m)


def train_config(cfg):
    return TrainConfig(seed=cfg["seed"], **cfg["train"])


def dumps(cfg):
    return json.dumps(cfg, indent=2, sort_keys=True) + "\n"
