"""Run configuration: a plain ``key = value`` file format over the typed
hyperparameter dataclasses, with precedence CLI override > file > defaults,
plus the run manifest embedded in checkpoints.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .agent import TrainConfig
from .swin import SwinConfig


class ConfigError(Exception):
    """Raised for unknown keys, malformed lines, or untypeable values."""


def valid_keys() -> list[str]:
    """The accepted config-file key names, sorted."""
    keys = set()
    for cls in (TrainConfig, SwinConfig):
        keys.update(f.name for f in dataclasses.fields(cls))
    return sorted(keys)


def _coerce(key: str, raw: str):
    """Parse a raw string value into the declared type of `key`."""
    annotation = {f.name: f.type for cls in (TrainConfig, SwinConfig)
                  for f in dataclasses.fields(cls)}[key]
    try:
        if annotation in ("int", int):
            return int(raw)
        if annotation in ("float", float):
            return float(raw)
        if annotation in ("str", str):
            return raw
        # tuple[int, ...]: comma-separated integers
        return tuple(int(part) for part in raw.split(",") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value {raw!r} for key {key!r}: {exc}") from exc


def parse_config(text: str) -> dict:
    """Parse ``key = value`` lines; blank lines and # comments ignored."""
    values = {}
    known = valid_keys()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected `key = value`, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(
                f"line {lineno}: unknown key {key!r}; valid keys: {', '.join(known)}"
            )
        values[key] = _coerce(key, raw)
    return values


def load_config(path: str | Path | None = None,
                overrides: dict | None = None) -> tuple[TrainConfig, SwinConfig]:
    """Build the config pair with precedence: overrides > file > defaults."""
    merged: dict = {}
    if path is not None:
        merged.update(parse_config(Path(path).read_text()))
    for key, value in (overrides or {}).items():
        if key not in valid_keys():
            raise ConfigError(f"unknown key {key!r}; valid keys: {', '.join(valid_keys())}")
        if value is not None:
            merged[key] = value
    train_fields = {f.name for f in dataclasses.fields(TrainConfig)}
    swin_fields = {f.name for f in dataclasses.fields(SwinConfig)}
    train_cfg = TrainConfig(**{k: v for k, v in merged.items() if k in train_fields})
    swin_cfg = SwinConfig(**{k: v for k, v in merged.items() if k in swin_fields})
    train_cfg.validate()
    return train_cfg, swin_cfg


def config_snapshot(train_cfg: TrainConfig, swin_cfg: SwinConfig) -> dict:
    """A flat, JSON-friendly dict of every hyperparameter key."""
    snap = {}
    for cfg in (train_cfg, swin_cfg):
        for f in dataclasses.fields(cfg):
            value = getattr(cfg, f.name)
            snap[f.name] = list(value) if isinstance(value, tuple) else value
    return snap


@dataclass
class RunManifest:
    """Provenance for a run: full config snapshot plus identifying metadata."""

    config: dict
    seed: int
    backbone: str
    env_name: str
    version: str = __version__
    started_at: str = ""
    finished_at: str = ""
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "RunManifest":
        return RunManifest(**json.loads(text))
