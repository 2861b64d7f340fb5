"""Flat key=value experiment configuration.

One document carries every knob: data generation, sampling mask, network
shape, training hyperparameters and seeds. Unknown keys are rejected, and
every command writes the fully resolved configuration (defaults included)
beside its outputs so a run can be reproduced from the artifacts alone.
"""

from __future__ import annotations

from pathlib import Path

DEFAULTS = {
    "seed": 0,
    "f64": False,
    "out": "results",
    # data
    "phantoms": 200,
    "size": 64,
    "coils": 1,
    "mask": "uniform_acs",        # uniform_acs | gaussian_random | full
    "accel": 4,
    "acs_fraction": 0.05,
    "augment": False,
    "train_count": 0,             # 0 = split by the 66:15 ratio
    # network
    "model": "multi_scale",       # multi_scale | single_scale
    "scales": 3,
    "stage_layers": 4,
    "base_channels": 16,
    "upsample": "switch",         # switch | nearest
    "skip": "concat",             # concat | add
    # training
    "epochs": 50,
    "batch": 3,
    "lr_start": 0.01,
    "lr_end": 0.001,
    "momentum": 0.9,
    "learning": "artifact",       # artifact | image
    "train_phase": False,
    "phase_threshold": 0.05,
    # homology
    "cloud_downsample": 32,
}

_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


def _parse_value(key: str, raw: str):
    default = DEFAULTS[key]
    raw = raw.strip()
    if isinstance(default, bool):
        low = raw.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_config(text: str) -> dict:
    """Parse key=value lines; '#' starts a comment. Unknown keys fail."""
    overrides = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        if key not in DEFAULTS:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        overrides[key] = _parse_value(key, value)
    return overrides


def load_config(path) -> dict:
    return resolve(parse_config(Path(path).read_text()))


def resolve(overrides: dict | None = None) -> dict:
    cfg = dict(DEFAULTS)
    if overrides:
        for key in overrides:
            if key not in DEFAULTS:
                raise ValueError(f"unknown config key {key!r}")
        cfg.update(overrides)
    return cfg


def format_config(cfg: dict) -> str:
    return "\n".join(f"{k} = {cfg[k]}" for k in DEFAULTS) + "\n"


def write_config(path, cfg: dict) -> None:
    Path(path).write_text(format_config(cfg))
