"""Run configuration: one human-editable YAML file drives every command.

Sections: top-level run settings, ``model`` (structure), ``schedule``
(optimization), ``spectrum`` (diagnostics command), and ``benchmark``
(grid declaration).  Configs round-trip losslessly through
``save_config`` / ``load_config``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

import yaml

from .training import FitSchedule, ModelConfig

__all__ = [
    "SpectrumConfig",
    "BenchmarkSpec",
    "RunConfig",
    "load_config",
    "save_config",
    "config_to_dict",
    "config_from_dict",
]


@dataclass(frozen=True)
class SpectrumConfig:
    ambient_dim: int = 3
    truncation: int = 35
    kernels: tuple = ("arccos1", "matern52", "squaredexp")
    activations: tuple = ("relu", "softplus")

    def __post_init__(self):
        object.__setattr__(self, "kernels", tuple(self.kernels))
        object.__setattr__(self, "activations", tuple(self.activations))
        if self.ambient_dim < 2:
            raise ValueError("ambient_dim must be >= 2")
        if self.truncation < 0:
            raise ValueError("truncation must be nonnegative")


@dataclass(frozen=True)
class BenchmarkSpec:
    datasets: tuple = ("snelson",)
    seeds: tuple = (0, 1, 2, 3, 4)
    configs: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "datasets", tuple(self.datasets))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(
            self,
            "configs",
            tuple(
                c if isinstance(c, ModelConfig) else ModelConfig(**c)
                for c in self.configs
            ),
        )


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    schedule: FitSchedule = field(default_factory=FitSchedule)
    spectrum: SpectrumConfig = field(default_factory=SpectrumConfig)
    benchmark: BenchmarkSpec = field(default_factory=BenchmarkSpec)
    dataset: str = "snelson"
    out_dir: str = "out"
    seed: int = 0
    test_fraction: float = 0.1

    def with_overrides(self, out_dir=None, seed=None) -> "RunConfig":
        updated = self
        if out_dir is not None:
            updated = replace(updated, out_dir=out_dir)
        if seed is not None:
            updated = replace(updated, seed=seed)
        return updated


def config_to_dict(config: RunConfig) -> dict:
    data = asdict(config)
    data["spectrum"]["kernels"] = list(config.spectrum.kernels)
    data["spectrum"]["activations"] = list(config.spectrum.activations)
    data["benchmark"]["datasets"] = list(config.benchmark.datasets)
    data["benchmark"]["seeds"] = list(config.benchmark.seeds)
    data["benchmark"]["configs"] = [asdict(c) for c in config.benchmark.configs]
    return data


def _build(cls, data: dict):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**data)


def config_from_dict(data: dict) -> RunConfig:
    data = dict(data or {})
    parts = {}
    if "model" in data:
        parts["model"] = _build(ModelConfig, data.pop("model"))
    if "schedule" in data:
        parts["schedule"] = _build(FitSchedule, data.pop("schedule"))
    if "spectrum" in data:
        parts["spectrum"] = _build(SpectrumConfig, data.pop("spectrum"))
    if "benchmark" in data:
        parts["benchmark"] = _build(BenchmarkSpec, data.pop("benchmark"))
    return _build(RunConfig, {**data, **parts})


def load_config(path: str) -> RunConfig:
    with open(path) as handle:
        data = yaml.safe_load(handle)
    return config_from_dict(data)


def save_config(config: RunConfig, path: str) -> None:
    with open(path, "w") as handle:
        yaml.safe_dump(config_to_dict(config), handle, sort_keys=True)
