"""Experiment configuration: a flat dataclass read from ``key=value`` text."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    seed: int = 0
    n_covers: int = 2000
    size: int = 64
    smoothness_min: float = 24.0
    smoothness_max: float = 48.0
    n_c0: int = 1000
    n_trn: int = 500
    n_tst: int = 500
    payloads: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5)
    payload: float = 0.4
    # targeted CNN
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 64
    iterations: int = 5000
    # FLD ensemble
    subspace_dim: int = 100
    learners: int = 51
    # AMA
    alpha: float = 2.0
    delta_beta: float = 0.1
    coder: str = "simulator"
    fixed_order: bool = False
    case2_betas: tuple[float, ...] = (0.1, 0.3, 0.5)
    ablation_aware: bool = True
    rounds: int = 5
    figures: bool = True

    def validate(self, splits: bool = True) -> "ExperimentConfig":
        """Check field ranges; ``splits=False`` skips the split-size checks."""
        if self.n_covers < 1:
            raise ConfigError("n_covers must be >= 1")
        if splits and self.n_c0 + self.n_trn + self.n_tst > self.n_covers:
            raise ConfigError("split sizes exceed n_covers")
        if splits and min(self.n_c0, self.n_trn, self.n_tst) < 2:
            raise ConfigError("every split needs at least two covers")
        if self.size < 16:
            raise ConfigError("size must be >= 16")
        if not all(0 < p <= 1.5 for p in (*self.payloads, self.payload)):
            raise ConfigError("payloads must be in (0, log2(3)] bits per element")
        if self.alpha <= 1:
            raise ConfigError("alpha must be > 1")
        if not 0 < self.delta_beta <= 1:
            raise ConfigError("delta_beta must be in (0, 1]")
        if self.coder not in ("simulator", "stc"):
            raise ConfigError("coder must be simulator or stc")
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        return self

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(repr(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    def updated(self, **overrides) -> "ExperimentConfig":
        clean = {k: v for k, v in overrides.items() if v is not None}
        return coerce(dataclasses.replace(self), clean)


def _convert(name: str, raw, default):
    try:
        if isinstance(default, bool):
            if isinstance(raw, bool):
                return raw
            low = str(raw).strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, tuple):
            if isinstance(raw, (tuple, list)):
                return tuple(float(x) for x in raw)
            return tuple(float(x) for x in str(raw).split(",") if x.strip())
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return str(raw).strip()
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def coerce(cfg: ExperimentConfig, values: dict) -> ExperimentConfig:
    defaults = {f.name: getattr(cfg, f.name) for f in dataclasses.fields(cfg)}
    for key, raw in values.items():
        name = key.replace("-", "_")
        if name not in defaults:
            raise ConfigError(f"unknown config key: {key}")
        setattr(cfg, name, _convert(name, raw, defaults[name]))
    return cfg


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return coerce(base or ExperimentConfig(), values)


def load_config(path: str | Path | None, base: ExperimentConfig | None = None) -> ExperimentConfig:
    if path is None:
        return base or ExperimentConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, base)
