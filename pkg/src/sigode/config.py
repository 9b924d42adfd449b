"""Flat key-value config files: `key = value` lines, `#` comments.

Each consumer validates against its own dataclass fields, so a typo'd or
out-of-place key fails loudly instead of being silently ignored.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

from .sigatoka import CardinalTemperatures, SurvivalParams
from .climate import SynthProfile
from .training import TrainConfig


class ConfigError(ValueError):
    pass


def read_kv(path: str | Path) -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected `key = value`, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key in entries:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        entries[key] = value.strip()
    return entries


def _coerce(key: str, text: str, pytype):
    try:
        if pytype is bool:
            lowered = text.lower()
            if lowered in ("true", "1", "yes"):
                return True
            if lowered in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if pytype is int:
            return int(text)
        if pytype is float:
            return float(text)
        if pytype is str:
            return text
        if pytype in (tuple, "tuple"):
            return tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {exc}")
    raise ConfigError(f"key {key!r} has unsupported type {pytype}")


def _apply(entries: dict[str, str], cls, defaults):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    overrides = {}
    for key, text in entries.items():
        if key not in fields:
            raise ConfigError(f"unknown key {key!r} for {cls.__name__}; "
                              f"known: {sorted(fields)}")
        current = getattr(defaults, key)
        pytype = tuple if isinstance(current, tuple) else type(current)
        overrides[key] = _coerce(key, text, pytype)
    return dataclasses.replace(defaults, **overrides)


def load_train_config(path: str | Path | None, **cli_overrides) -> TrainConfig:
    cfg = TrainConfig()
    if path is not None:
        cfg = _apply(read_kv(path), TrainConfig, cfg)
    if cli_overrides:
        cfg = dataclasses.replace(cfg, **cli_overrides)
    return cfg


_SURVIVAL_KEYS = ("t_min", "t_opt", "t_max", "alpha", "gamma", "beta")


def load_generate_config(path: str | Path | None) -> tuple[SurvivalParams, SynthProfile]:
    """One file may hold both survival parameters and synthesis amplitudes."""
    params = SurvivalParams()
    profile = SynthProfile()
    if path is None:
        return params, profile
    entries = read_kv(path)
    cardinal_over = {}
    survival_over = {}
    profile_entries = {}
    profile_fields = {f.name for f in dataclasses.fields(SynthProfile)} - {"start_time"}
    for key, text in entries.items():
        if key in ("t_min", "t_opt", "t_max"):
            cardinal_over[key] = _coerce(key, text, float)
        elif key in _SURVIVAL_KEYS:
            survival_over[key] = _coerce(key, text, float)
        elif key in profile_fields:
            profile_entries[key] = text
        else:
            raise ConfigError(f"unknown key {key!r}; survival keys: {_SURVIVAL_KEYS}, "
                              f"profile keys: {sorted(profile_fields)}")
    if cardinal_over:
        survival_over["cardinals"] = dataclasses.replace(CardinalTemperatures(), **cardinal_over)
    if survival_over:
        params = dataclasses.replace(params, **survival_over)
    if profile_entries:
        profile = _apply(profile_entries, SynthProfile, profile)
    return params, profile
