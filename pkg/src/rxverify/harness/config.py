"""Experiment configuration: one JSON document describes a full run.

Schema (all keys optional, defaults shown by :class:`ExperimentConfig`)::

    {
      "train_conditions": [["tdl_d", 0.0, 100.0], ...],   # (profile, speed m/s, delay spread ns)
      "test_conditions":  [["tdl_d", 20.0, 100.0]],
      "ebn0": {"start": 0, "stop": 20, "step": 10},         # dB, stop inclusive
      "train_frames": 200, "test_frames": 20,                # frames per condition per Eb/N0
      "seed": 0, "pilot_seed": 0, "pilot_pattern": "c",
      "k": 5, "lam": 0.95, "window": 50, "ood_threshold": 1,
      "monitor_classes": "profile",
      "receiver": {"width": 32, "n_blocks": 3, "epochs": 3, "lr": 0.1, "batch_size": 16},
      "monitor":  {"epochs": 30, "lr": 0.01, "batch_size": 32, "feature_dim": 512, ...}
    }
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..channel import PROFILES
from ..grid import PILOT_PATTERNS


AWGN = "awgn"
CONDITION_PROFILES = (*PROFILES, AWGN)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Condition:
    """One channel environment: TDL profile, UE speed (m/s), RMS delay spread (ns).

    The pseudo-profile ``"awgn"`` means a flat unit channel (H = 1).
    """

    profile: str
    speed: float
    delay_spread_ns: float

    def __post_init__(self):
        if self.profile not in CONDITION_PROFILES:
            raise ConfigError(f"unknown profile {self.profile!r}")
        if not (np.isfinite(self.speed) and self.speed >= 0):
            raise ConfigError(f"speed must be finite and >= 0, got {self.speed}")
        if not np.isfinite(self.delay_spread_ns) or self.delay_spread_ns < 0:
            raise ConfigError(f"delay spread must be finite and >= 0, got {self.delay_spread_ns}")
        if self.profile != AWGN and self.delay_spread_ns == 0:
            raise ConfigError("fading profiles need a positive delay spread")

    @classmethod
    def parse(cls, value) -> "Condition":
        if isinstance(value, Condition):
            return value
        if isinstance(value, dict):
            return cls(value["profile"], float(value["speed"]), float(value["delay_spread_ns"]))
        try:
            profile, speed, ds = value
        except (TypeError, ValueError):
            raise ConfigError(f"condition must be (profile, speed, delay_spread_ns), got {value!r}") from None
        return cls(str(profile), float(speed), float(ds))

    @property
    def label(self) -> str:
        return f"{self.profile}/{self.speed:g}mps/{self.delay_spread_ns:g}ns"

    def as_list(self) -> list:
        return [self.profile, self.speed, self.delay_spread_ns]


@dataclass(frozen=True)
class EbN0Sweep:
    start: float = 0.0
    stop: float = 20.0
    step: float = 10.0

    def __post_init__(self):
        if not self.step > 0:
            raise ConfigError("Eb/N0 step must be positive")
        if self.stop < self.start:
            raise ConfigError("Eb/N0 stop must not be below start")

    @property
    def values(self) -> list[float]:
        n = int(np.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return [round(self.start + i * self.step, 10) for i in range(n)]


@dataclass
class ReceiverHyper:
    width: int = 32
    n_blocks: int = 3
    epochs: int = 3
    lr: float = 0.1
    momentum: float = 0.9
    batch_size: int = 16
    clip_norm: float = 1.0


@dataclass
class MonitorHyper:
    epochs: int = 30
    lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 32
    feature_dim: int = 512
    conv_channels: int = 16
    residual_channels: int = 32
    projection_dims: tuple[int, ...] = (256, 128)
    dropout: float = 0.1
    margin: float = 0.2
    clip_norm: float = 5.0


MONITOR_CLASS_KEYS = ("profile", "speed", "delay_spread", "condition")


@dataclass
class ExperimentConfig:
    train_conditions: list[Condition] = field(default_factory=lambda: [Condition("tdl_d", 0.0, 100.0)])
    test_conditions: list[Condition] = field(default_factory=lambda: [Condition("tdl_d", 20.0, 100.0)])
    ebn0: EbN0Sweep = field(default_factory=EbN0Sweep)
    train_frames: int = 200
    test_frames: int = 20
    seed: int = 0
    pilot_seed: int = 0
    pilot_pattern: str = "c"
    k: int = 5
    lam: float = 0.95
    window: int = 50
    ood_threshold: int = 1
    monitor_classes: str = "profile"
    receiver: ReceiverHyper = field(default_factory=ReceiverHyper)
    monitor: MonitorHyper = field(default_factory=MonitorHyper)

    def __post_init__(self):
        self.train_conditions = [Condition.parse(c) for c in self.train_conditions]
        self.test_conditions = [Condition.parse(c) for c in self.test_conditions]
        if isinstance(self.ebn0, dict):
            self.ebn0 = EbN0Sweep(**self.ebn0)
        if isinstance(self.receiver, dict):
            self.receiver = ReceiverHyper(**self.receiver)
        if isinstance(self.monitor, dict):
            m = dict(self.monitor)
            if "projection_dims" in m:
                m["projection_dims"] = tuple(m["projection_dims"])
            self.monitor = MonitorHyper(**m)
        self.validate()

    def validate(self) -> None:
        if self.train_frames < 1 or self.test_frames < 1:
            raise ConfigError("frame counts must be >= 1")
        if self.pilot_pattern not in PILOT_PATTERNS:
            raise ConfigError(f"unknown pilot pattern {self.pilot_pattern!r}")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if not 0 < self.lam <= 1:
            raise ConfigError("lam must lie in (0, 1]")
        if self.window < 1 or self.ood_threshold < 1:
            raise ConfigError("window and ood_threshold must be >= 1")
        if self.monitor_classes not in MONITOR_CLASS_KEYS:
            raise ConfigError(f"monitor_classes must be one of {MONITOR_CLASS_KEYS}")
        if not self.train_conditions:
            raise ConfigError("at least one training condition is required")

    def conditions(self, split: str) -> list[Condition]:
        if split not in ("train", "test"):
            raise ConfigError(f"split must be 'train' or 'test', got {split!r}")
        return self.train_conditions if split == "train" else self.test_conditions

    def frames(self, split: str) -> int:
        return self.train_frames if split == "train" else self.test_frames

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["train_conditions"] = [c.as_list() for c in self.train_conditions]
        d["test_conditions"] = [c.as_list() for c in self.test_conditions]
        d["monitor"]["projection_dims"] = list(self.monitor.projection_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return ExperimentConfig.from_dict(data)


def save_config(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2))
