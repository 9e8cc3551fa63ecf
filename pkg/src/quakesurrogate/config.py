"""Run configuration: typed sections loaded from TOML profiles and files."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Tuple

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigurationError
from .hazard import HazardConfig, SynthesizerConfig
from .masked_net.losses import LossConfig
from .masked_net.network import NetworkConfig
from .selection import SelectionPlan
from .solver import SDOFParams, ShearBuildingParams, default_building

PROFILES = ("desk", "full")


@dataclass(frozen=True)
class BuildingConfig:
    n_stories: int = 20
    floor_mass_kg: float = 5.0e5
    story_height_m: float = 4.0
    roof_stiffness_fraction: float = 0.4
    yield_drift: float = 0.01
    post_yield_ratio: float = 0.1
    target_T1: float = 2.40
    zeta1: float = 0.03
    zeta2: float = 0.03

    def build(self) -> ShearBuildingParams:
        b = default_building(self.n_stories, self.floor_mass_kg, self.story_height_m,
                             self.roof_stiffness_fraction, self.yield_drift,
                             self.post_yield_ratio, self.target_T1)
        return replace(b, rayleigh_zetas=(self.zeta1, self.zeta2))


@dataclass(frozen=True)
class CalibrationConfig:
    enabled: bool = True
    budget: int = 500
    n_motions: int = 20
    seed: int = 0


@dataclass(frozen=True)
class TrainingConfig:
    source_epochs: int = 1000
    source_lr: float = 5e-5
    source_batch: int = 16
    source_seed: int = 0
    target_lr: float = 1e-3
    target_max_epochs: int = 2000
    target_patience: int = 200
    target_batch: int = 16
    target_seed: int = 0
    network_seed: int = 0


@dataclass(frozen=True)
class EvaluationConfig:
    absolute_accel: bool = False
    percentile_levels: Tuple[int, ...] = (5, 50, 95)
    n_thresholds: int = 50
    plots: bool = True


@dataclass(frozen=True)
class RunConfig:
    hazard: HazardConfig = field(default_factory=HazardConfig)
    synthesizer: SynthesizerConfig = field(default_factory=SynthesizerConfig)
    selection: SelectionPlan = field(default_factory=SelectionPlan)
    source_model: SDOFParams = field(default_factory=SDOFParams)
    target_model: BuildingConfig = field(default_factory=BuildingConfig)
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    profile: str = "full"

    def validate(self) -> "RunConfig":
        self.hazard.validate()
        self.synthesizer.validate(self.hazard.dt_s)
        self.network.validate()
        self.loss.validate()
        if self.network.T_step != self.hazard.n_steps:
            raise ConfigurationError("network.T_step must equal hazard.n_steps")
        if not math.isclose(self.loss.dt_s, self.hazard.dt_s):
            raise ConfigurationError("loss.dt_s must equal hazard.dt_s")
        if self.network.n_floors != self.target_model.n_stories:
            raise ConfigurationError("network.n_floors must equal target_model.n_stories")
        t = self.training
        if min(t.source_batch, t.target_batch) < 1 or t.source_epochs < 0:
            raise ConfigurationError("batch sizes must be >= 1 and epochs >= 0")
        if not (t.source_lr > 0 and t.target_lr > 0):
            raise ConfigurationError("learning rates must be positive")
        if self.calibration.budget < 1 or self.calibration.n_motions < 1:
            raise ConfigurationError("calibration budget and motion count must be >= 1")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def with_seed(self, seed: int) -> "RunConfig":
        """Replace every seed of the run with ``seed``."""
        return replace(
            self, hazard=replace(self.hazard, seed=seed),
            calibration=replace(self.calibration, seed=seed),
            training=replace(self.training, source_seed=seed, target_seed=seed,
                             network_seed=seed))


def _coerce(cls, section: str, data: dict):
    if not isinstance(data, dict):
        raise ConfigurationError(f"[{section}] must be a table")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigurationError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")
    kw = {}
    for name, value in data.items():
        default = getattr(cls(), name) if _has_defaults(cls) else None
        if isinstance(default, tuple) or isinstance(value, list):
            value = tuple(value)
        elif isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        elif default is not None and type(default) is not type(value):
            raise ConfigurationError(
                f"[{section}] {name} should be {type(default).__name__}, got {value!r}")
        kw[name] = value
    return kw


def _has_defaults(cls) -> bool:
    return all(f.default is not dataclasses.MISSING or f.default_factory is not dataclasses.MISSING
               for f in fields(cls))


_SECTIONS = {f.name: f for f in fields(RunConfig) if f.name != "profile"}


def merge(base: RunConfig, data: dict) -> RunConfig:
    """Overlay a parsed TOML document onto ``base``; unknown sections or keys fail."""
    unknown = sorted(set(data) - set(_SECTIONS) - {"profile"})
    if unknown:
        raise ConfigurationError(f"unknown section(s): {', '.join(unknown)}")
    updates = {}
    for name, value in data.items():
        if name == "profile":
            continue
        current = getattr(base, name)
        try:
            updates[name] = replace(current, **_coerce(type(current), name, value))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(f"invalid [{name}] section: {exc}") from exc
    return replace(base, **updates)


def load_profile(name: str) -> RunConfig:
    if name not in PROFILES:
        raise ConfigurationError(f"unknown profile {name!r}; choose from {PROFILES}")
    text = resources.files("quakesurrogate.profiles").joinpath(f"{name}.toml").read_text()
    return replace(merge(RunConfig(), tomllib.loads(text)), profile=name)


def load_config(path: Optional[str] = None, profile: Optional[str] = None) -> RunConfig:
    """Profile defaults (desk unless the file names one) overlaid with ``path``."""
    data = {}
    if path is not None:
        try:
            data = tomllib.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigurationError(f"config file not found: {path}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"cannot parse {path}: {exc}") from None
    name = profile or data.get("profile", "desk")
    cfg = merge(load_profile(name), data)
    return cfg.validate()
