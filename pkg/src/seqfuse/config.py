"""Run configuration: flat-key YAML with defaults and fail-fast validation."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

CHANNEL_NAMES = ("sad", "hog", "cnn-pyramid", "cnn-argmax")
GENERIC_PREFIX = "generic-tensor:"


class ConfigError(ValueError):
    """Raised for malformed or inconsistent run configuration."""


@dataclass
class RunConfig:
    """Every tunable of the pipeline, with the documented defaults.

    ``channels`` entries are drawn from sad / hog / cnn-pyramid /
    cnn-argmax / generic-tensor:<dir>. Per-channel observation thresholds
    can be set with flat keys of the form ``o_thresh_sad``.
    """

    channels: list[str] = field(default_factory=lambda: ["sad", "hog"])
    epsilon: float = 0.001
    o_thresh: float = 0.5
    o_thresh_overrides: dict = field(default_factory=dict)
    q_t: float = 0.1
    window: int = 10
    s_min: int = 5
    s_max: int = 20
    v_min: int = 0
    v_max: int = 5
    theta_a: float = 0.05
    patch_size: int = 8
    vote_mode: str = "median"
    mpf: bool = True
    dynamic: bool = True
    tau: int = 20
    stride: int = 1
    sad_metric: str = "cosine"
    tensor_layer: str | None = None
    seed: int = 0
    world: dict | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.channels:
            raise ConfigError("at least one channel is required")
        for name in self.channels:
            if name not in CHANNEL_NAMES and not name.startswith(GENERIC_PREFIX):
                raise ConfigError(
                    f"unknown channel {name!r}; expected one of {CHANNEL_NAMES} "
                    f"or {GENERIC_PREFIX}<dir>")
        if len(set(self.channels)) != len(self.channels):
            raise ConfigError("duplicate channel entries")
        if not 0 < self.epsilon < 0.5:
            raise ConfigError(f"epsilon {self.epsilon} outside (0, 0.5)")
        if not 0 <= self.o_thresh <= 1 - self.epsilon:
            raise ConfigError(f"o_thresh {self.o_thresh} outside [0, {1 - self.epsilon}]")
        for ch, val in self.o_thresh_overrides.items():
            if not 0 <= val <= 1 - self.epsilon:
                raise ConfigError(f"o_thresh override {val} for {ch!r} out of range")
        if not 0 < self.s_min <= self.s_max:
            raise ConfigError(f"sequence bounds [{self.s_min}, {self.s_max}] invalid")
        if self.v_min > self.v_max:
            raise ConfigError(f"velocity band [{self.v_min}, {self.v_max}] invalid")
        if self.q_t < 0:
            raise ConfigError("q_t must be nonnegative")
        if self.theta_a <= 0:
            raise ConfigError("theta_a must be positive")
        if self.window < 0:
            raise ConfigError("window half-width must be nonnegative")
        if self.patch_size < 1 or 32 % self.patch_size or 64 % self.patch_size:
            raise ConfigError(f"patch size {self.patch_size} does not tile 64x32")
        if self.vote_mode not in ("median", "mean"):
            raise ConfigError(f"vote mode {self.vote_mode!r} not in (median, mean)")
        if self.tau < 1:
            raise ConfigError("tau must be positive")
        if self.stride < 1:
            raise ConfigError("stride must be positive")
        if self.sad_metric not in ("cosine", "absdiff"):
            raise ConfigError(f"sad metric {self.sad_metric!r} not in (cosine, absdiff)")

    def o_thresh_for(self, name: str, spec: str | None = None) -> float:
        """Per-channel observation threshold, looked up by channel name or
        config spelling, falling back to the global default."""
        if name in self.o_thresh_overrides:
            return float(self.o_thresh_overrides[name])
        if spec is not None and spec in self.o_thresh_overrides:
            return float(self.o_thresh_overrides[spec])
        return float(self.o_thresh)


def load_config(path: str | Path) -> RunConfig:
    """Parse a YAML config file; unknown keys are rejected up front."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}")
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must contain a mapping at top level")
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    kwargs: dict = {}
    overrides: dict = {}
    for key, value in raw.items():
        if key.startswith("o_thresh_") and key != "o_thresh_overrides":
            overrides[key[len("o_thresh_"):]] = float(value)
        elif key in known:
            kwargs[key] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    if overrides:
        merged = dict(kwargs.get("o_thresh_overrides", {}))
        merged.update(overrides)
        kwargs["o_thresh_overrides"] = merged
    try:
        return RunConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc))
