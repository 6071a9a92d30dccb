"""Flat key=value run configuration with typed validation.

The same text format round-trips through run directories so a run is fully
reproducible from its persisted config plus the seed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

GPL_SEED_ENV = "GPL_SEED"


class ConfigError(ValueError):
    pass


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {raw!r}")


@dataclass
class RunConfig:
    domain: str = "grid"
    seed: int = -1  # -1: take GPL_SEED or 0
    n_train: int = 300
    n_test: int = 50
    iterations: int = 4
    c_max: int = 5
    batch_size: int = 128
    correction_mode: str = "subgoal"
    no_instruction: bool = False
    no_trajectory: bool = False
    immediate_only: bool = False
    gpr_mode: bool = False
    full_info: bool = False
    holdout: str = ""  # grid: "color shape" pairs, comma-separated
    train_tasks: str = ""
    test_tasks: str = ""
    out_dir: str = ""

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.domain not in ("grid", "pusher"):
            raise ConfigError(f"domain must be grid or pusher, got {self.domain!r}")
        if self.seed == -1:
            self.seed = int(os.environ.get(GPL_SEED_ENV, "0"))
        for key in ("seed", "n_train", "n_test", "iterations", "c_max", "batch_size"):
            v = getattr(self, key)
            if not isinstance(v, int) or (key != "seed" and v < 0):
                raise ConfigError(f"{key} must be a non-negative integer, got {v!r}")
        if self.batch_size == 0:
            raise ConfigError("batch_size must be positive")
        from .language import GRID_CORRECTION_MODES  # noqa: PLC0415 (cycle)
        if self.domain == "grid" and self.correction_mode not in GRID_CORRECTION_MODES:
            raise ConfigError(
                f"correction_mode must be one of {GRID_CORRECTION_MODES}, "
                f"got {self.correction_mode!r}")
        if self.full_info and (self.gpr_mode or self.immediate_only):
            raise ConfigError("full_info excludes gpr_mode and immediate_only")
        if self.holdout and self.domain != "grid":
            raise ConfigError("holdout specs apply to the grid domain only")
        self.holdout_pairs()  # raises on a malformed spec

    def holdout_pairs(self) -> list[tuple[str, str]]:
        pairs = []
        for part in self.holdout.split(","):
            part = part.strip()
            if not part:
                continue
            words = part.split()
            if len(words) != 2:
                raise ConfigError(
                    f"holdout entries must be 'color shape', got {part!r}")
            pairs.append((words[0], words[1]))
        return pairs

    def model_flags(self) -> dict:
        return {"no_instruction": self.no_instruction,
                "no_trajectory": self.no_trajectory,
                "immediate_only": self.immediate_only,
                "gpr_mode": self.gpr_mode,
                "full_info": self.full_info}

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def parse_items(text: str) -> dict:
    """key=value lines (# comments, blank lines allowed) -> raw string dict."""
    items = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key in items:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        items[key] = value.strip()
    return items


def from_items(items: dict) -> RunConfig:
    """Typed RunConfig from raw string values; rejects unknown keys."""
    kwargs = {}
    for key, raw in items.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        ftype = _FIELD_TYPES[key]
        if ftype in ("int", int):
            try:
                kwargs[key] = int(raw)
            except ValueError:
                raise ConfigError(f"{key} must be an integer, got {raw!r}") from None
        elif ftype in ("bool", bool):
            kwargs[key] = _parse_bool(raw)
        else:
            kwargs[key] = raw
    return RunConfig(**kwargs)


def load(path) -> RunConfig:
    with open(path) as f:
        return from_items(parse_items(f.read()))


def save(cfg: RunConfig, path) -> None:
    with open(path, "w") as f:
        f.write(cfg.to_text())
