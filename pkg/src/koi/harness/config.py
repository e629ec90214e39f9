"""Experiment configuration: one nested YAML file, echoed on every run.

The resolved config (defaults filled in) is written back into the output
directory so any curve can be traced to the exact parameters that made it.
Unknown keys are rejected rather than ignored.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..envs import TaskSpec
from ..keystates.motion import FlowParams
from ..learner.bc import BCConfig
from ..learner.loop import OnlineTrainConfig
from ..learner.updates import LambdaStrategy
from ..ot import OTConfig
from ..weights import KeyWeightParams
from .modes import MODES


class ConfigError(Exception):
    pass


@dataclass
class DemoConfig:
    count_bc: int = 3  # demos for cloning
    count_ot: int = 1  # demos the reward is estimated against
    seed_base: int = 10000
    dir: str = "demos"


@dataclass
class ExperimentConfig:
    task: TaskSpec = field(default_factory=TaskSpec)
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])
    modes: list[str] = field(default_factory=lambda: ["koi", "uniform"])
    annotator: str = "scripted"  # scripted | vlm
    vlm_model: str = ""
    sample_stride: int = 10
    demos: DemoConfig = field(default_factory=DemoConfig)
    key_weights: KeyWeightParams = field(default_factory=KeyWeightParams)
    flow: FlowParams = field(default_factory=FlowParams)
    ot: OTConfig = field(default_factory=OTConfig)
    lambda_strategy: LambdaStrategy = field(default_factory=LambdaStrategy)
    bc: BCConfig = field(default_factory=BCConfig)
    online: OnlineTrainConfig = field(default_factory=OnlineTrainConfig)
    out_dir: str = "out"
    workers: int = 1

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        for mode in self.modes:
            if mode not in MODES:
                raise ConfigError(f"unknown mode {mode!r}; expected one of {MODES}")
        if self.annotator not in ("scripted", "vlm"):
            raise ConfigError(f"annotator must be 'scripted' or 'vlm', got {self.annotator!r}")
        if self.demos.count_ot > self.demos.count_bc:
            raise ConfigError("count_ot cannot exceed count_bc")


_NESTED = {
    "task": TaskSpec,
    "demos": DemoConfig,
    "key_weights": KeyWeightParams,
    "flow": FlowParams,
    "ot": OTConfig,
    "lambda_strategy": LambdaStrategy,
    "bc": BCConfig,
    "online": OnlineTrainConfig,
}


def _build(cls, raw: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - names
    if unknown:
        raise ConfigError(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
    return cls(**raw)


def config_from_dict(raw: dict) -> ExperimentConfig:
    raw = dict(raw or {})
    kwargs = {}
    for key, cls in _NESTED.items():
        if key in raw:
            sub = raw.pop(key)
            if not isinstance(sub, dict):
                raise ConfigError(f"{key} must be a mapping")
            if key == "online" and "lambda_strategy" in sub:
                sub = dict(sub)
                sub["lambda_strategy"] = _build(LambdaStrategy, sub["lambda_strategy"])
            if key == "online" and "ot" in sub:
                sub = dict(sub)
                sub["ot"] = _build(OTConfig, sub["ot"])
            kwargs[key] = _build(cls, sub)
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(raw) - names
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    kwargs.update(raw)
    config = _build(ExperimentConfig, kwargs)
    # the online loop consumes these shared blocks
    config.online.lambda_strategy = config.lambda_strategy
    config.online.ot = config.ot
    return config


def config_to_dict(config: ExperimentConfig) -> dict:
    def as_dict(obj):
        if dataclasses.is_dataclass(obj):
            return {f.name: as_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        if isinstance(obj, (list, tuple)):
            return [as_dict(x) for x in obj]
        return obj

    return as_dict(config)


def load_config(path) -> ExperimentConfig:
    raw = yaml.safe_load(Path(path).read_text())
    return config_from_dict(raw)


def echo_config(config: ExperimentConfig, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config_echo.yaml").write_text(
        yaml.safe_dump(config_to_dict(config), sort_keys=True)
    )
