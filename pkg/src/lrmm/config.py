"""Run configuration shared by every CLI stage.

A config file is a JSON object with ``"version": 1`` and any subset of the
sections below; missing keys fall back to ``DEFAULTS``.  Command-line flags
and ``--set section.key=value`` overrides are applied on top.

    {
      "version": 1,
      "system": "dubins4d",
      "system_params": {"d_r": 0.1},
      "world": {...},        # WorldSpec fields (circles or maze)
      "dataset": {...},      # worlds, samples, test_*, n, m, t, metric, seed
      "train": {...},        # TrainConfig fields
      "eval": {...}          # episodes, guardians, latency, driver, seed
    }
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

from .errors import ConfigError

CONFIG_VERSION = 1

DEFAULTS = {
    "version": CONFIG_VERSION,
    "system": "dubins4d",
    "system_params": {"d_r": 0.1},
    "world": {},
    "dataset": {
        "worlds": 32,
        "samples": 8192,
        "test_worlds": 8,
        "test_samples": 1024,
        "n": 32,
        "m": 2,
        "t": 2.0,
        "metric": "expected",
        "seed": 0,
    },
    "train": {"epochs": 200, "batch_size": 128, "lr": 1e-3, "optimizer": "adam", "seed": 0},
    "eval": {
        "episodes": 512,
        "guardians": ["lrmm", "cbf", "random", "inactive", "brakes_only"],
        "latency_mode": "charged",
        "threshold": 0.5,
        "seed": 1000,
        "charged_latency": {},
        "driver": {},
        "duration": 25.0,
        "decision_period": 0.1,
    },
}

SECTIONS = ("world", "dataset", "train", "eval", "system_params")


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path=None) -> dict:
    if path is None:
        return copy.deepcopy(DEFAULTS)
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    version = doc.get("version")
    if version != CONFIG_VERSION:
        raise ConfigError(f"config version {version!r} not supported (expected {CONFIG_VERSION})")
    unknown = set(doc) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return _merge(DEFAULTS, doc)


def apply_override(cfg: dict, assignment: str) -> None:
    """'eval.episodes=64' style override; the value is parsed as JSON when possible."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    path, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    keys = path.strip().split(".")
    node = cfg
    for key in keys[:-1]:
        if not isinstance(node.get(key), dict):
            raise ConfigError(f"override path {path!r} does not name a config section")
        node = node[key]
    node[keys[-1]] = value


def set_if(section: dict, key: str, value) -> None:
    if value is not None:
        section[key] = value
