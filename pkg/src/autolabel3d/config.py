"""Run configuration: YAML sections mapped onto the module configs."""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import yaml

from .core import InvalidArgument
from .pipeline import PipelineConfig
from .providers import NoiseConfig
from .simulator import SimConfig

NOISE_PROFILES: dict[str, NoiseConfig] = {
    "noiseless": NoiseConfig.noiseless(),
    "light": NoiseConfig(match_dropout_base=0.05, center_px_sigma=1.0,
                         depth_rel_sigma=0.005, dims_rel_sigma=0.01),
    "medium": NoiseConfig(match_dropout_base=0.2, dropout_occlusion_gain=0.3,
                          center_px_sigma=2.0, depth_rel_sigma=0.01,
                          dims_rel_sigma=0.02, direction_flip_prob=0.01),
    "heavy_dropout": NoiseConfig(match_dropout_base=0.5, confidence_c0=1.0,
                                 confidence_d0=float("inf"),
                                 confidence_k_occ=0.0),
}


@dataclass(frozen=True)
class SamplingConfig:
    max_per_track: int = 4
    seed: int = 0
    window: int = 8

    def __post_init__(self):
        if self.max_per_track < 1:
            raise InvalidArgument("sampling.max_per_track must be >= 1")
        if self.window < 0:
            raise InvalidArgument("sampling.window must be >= 0")


@dataclass(frozen=True)
class MetricsConfig:
    dist_threshold: float = 2.0
    recall_grid: tuple[float, ...] = tuple(round(0.05 * i, 2)
                                           for i in range(1, 21))

    def __post_init__(self):
        if self.dist_threshold <= 0:
            raise InvalidArgument("metrics.dist_threshold must be positive")
        if any(not 0 < r <= 1 for r in self.recall_grid):
            raise InvalidArgument("recall grid values must lie in (0, 1]")


@dataclass(frozen=True)
class RunConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig.noiseless)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    heatmap_stride: int = 4


def _build(cls, data: dict, section: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise InvalidArgument(
            f"unknown keys in [{section}]: {sorted(unknown)}; "
            f"allowed: {sorted(allowed)}")
    coerced = {}
    for f in fields(cls):
        if f.name not in data:
            continue
        v = data[f.name]
        if isinstance(v, list):
            v = tuple(v)
        coerced[f.name] = v
    return cls(**coerced)


def run_config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise InvalidArgument("config root must be a mapping")
    known = {"sim", "noise", "pipeline", "sampling", "metrics", "heatmap_stride"}
    unknown = set(data) - known
    if unknown:
        raise InvalidArgument(f"unknown config sections: {sorted(unknown)}")
    noise_section = data.get("noise", {})
    if isinstance(noise_section, str):
        if noise_section not in NOISE_PROFILES:
            raise InvalidArgument(
                f"unknown noise profile {noise_section!r}; "
                f"profiles: {sorted(NOISE_PROFILES)}")
        noise = NOISE_PROFILES[noise_section]
    else:
        noise = _build(NoiseConfig, noise_section, "noise")
    return RunConfig(
        sim=_build(SimConfig, data.get("sim", {}), "sim"),
        noise=noise,
        pipeline=_build(PipelineConfig, data.get("pipeline", {}), "pipeline"),
        sampling=_build(SamplingConfig, data.get("sampling", {}), "sampling"),
        metrics=_build(MetricsConfig, data.get("metrics", {}), "metrics"),
        heatmap_stride=int(data.get("heatmap_stride", 4)),
    )


def load_run_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    return run_config_from_dict(data)
