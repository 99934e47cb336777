"""Run configuration: one document owning every tunable.

A config canonicalizes to JSON; its digest stamps every artifact a run
produces so results trace back to exact settings. Unknown keys are
rejected rather than ignored, and command-line overrides always win
over file values.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, fields

from .jsonio import canonical_dumps
from .policy import input_width
from .simulator import VehicleConfig
from .uncertainty import BinSpec

CONFIG_VERSION = 1


class ConfigError(Exception):
    """Malformed config file, unknown key, or invalid value."""


def _default_steer_bins() -> BinSpec:
    return BinSpec(lo=-1.0, hi=1.0, n_bins=20)


def _default_throttle_bins() -> BinSpec:
    return BinSpec(lo=0.0, hi=1.0, n_bins=20)


@dataclass
class RunConfig:
    seed: int = 0

    # uncertainty scoring
    steer_bins: BinSpec = field(default_factory=_default_steer_bins)
    throttle_bins: BinSpec = field(default_factory=_default_throttle_bins)
    sd_weight: float = 1.0
    alpha: float = 0.6
    eta: float = 0.05
    window_size: int = 5
    n_samples: int = 20

    # policy network and training
    hidden_layers: list[int] = field(default_factory=lambda: [64, 64])
    dropout: float = 0.1
    activation: str = "tanh"
    lr: float = 1e-3
    epochs: int = 120
    batch: int = 64
    momentum: float = 0.9

    # collection strategies
    mix_p: float = 0.4
    noise_period: int = 5
    noise_bound: float = 1.0  # full scale = the steering range itself
    starter_frames: int = 3000
    budget_frames: int = 3000
    loop_iterations: int = 3
    batch_frames: int = 1500
    max_episode_ticks: int = 1500

    # evaluation
    buffers: list[int] = field(default_factory=lambda: [3, 5, 10])
    cases_per_type: int = 5
    bench_seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    bench_max_ticks: int = 1500

    # world
    n_seen_tracks: int = 3
    n_unseen_tracks: int = 3
    track_left: int = 2
    track_right: int = 2
    track_straight: int = 1
    obstacle_density: float = 1.5
    half_width: float = 2.0
    vehicle: VehicleConfig = field(default_factory=VehicleConfig)

    def __post_init__(self):
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if not (self.eta > 0.0):
            raise ConfigError(f"eta must be positive, got {self.eta}")
        if self.window_size < 1 or self.n_samples < 2:
            raise ConfigError("window_size >= 1 and n_samples >= 2 required")
        if not (0.0 <= self.mix_p <= 1.0):
            raise ConfigError(f"mix_p must be in [0, 1], got {self.mix_p}")
        if self.noise_period < 1 or not (0.0 <= self.noise_bound <= 1.0):
            raise ConfigError("noise_period >= 1 and noise_bound in [0, 1] required")
        if any(b < 1 for b in self.buffers):
            raise ConfigError(f"buffers must be positive, got {self.buffers}")

    @property
    def arch(self) -> list[int]:
        return [input_width(self.vehicle.n_rays)] + list(self.hidden_layers) + [2]

    def to_dict(self) -> dict:
        doc = {"version": CONFIG_VERSION}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, (BinSpec, VehicleConfig)):
                value = value.to_dict()
            elif f.name == "eta":
                value = "inf" if math.isinf(value) else value
            doc[f.name] = value
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        doc = dict(doc)
        version = doc.pop("version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {version}")
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for name, value in doc.items():
            if name in ("steer_bins", "throttle_bins"):
                value = BinSpec.from_dict(value)
            elif name == "vehicle":
                value = VehicleConfig.from_dict(value)
            elif name == "eta" and value == "inf":
                value = math.inf
            kwargs[name] = value
        try:
            return cls(**kwargs)
        except TypeError as e:
            raise ConfigError(str(e)) from e

    def digest(self) -> str:
        payload = canonical_dumps(self.to_dict()).encode()
        return hashlib.sha256(payload).hexdigest()[:12]


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    return RunConfig.from_dict(doc)


def save_config(config: RunConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(canonical_dumps(config.to_dict()))


def apply_overrides(config: RunConfig, overrides: dict) -> RunConfig:
    """Produce a new config with override values replacing file values."""
    if not overrides:
        return config
    doc = config.to_dict()
    unknown = set(overrides) - (set(doc) - {"version"})
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    doc.update(overrides)
    return RunConfig.from_dict(doc)
