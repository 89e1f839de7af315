"""Pipeline configuration: one JSON document, every key a dotted CLI flag.

The dataclass tree mirrors the JSON layout; ``add_config_flags`` turns every
leaf into an argparse option of the same dotted name (--model.nz, --map.workers,
...), so a config file and command line compose with the flag winning.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any


@dataclass(frozen=True)
class ModelConfig:
    nz: int = 101
    nx: int = 101
    dz: float = 10.0
    dx: float = 10.0
    layer_velocities: tuple = (1500.0,)


@dataclass(frozen=True)
class SurveyConfig:
    n_receivers: int = 8  # shots after reciprocity
    n_sources: int = 48  # receivers per shot after reciprocity
    record_time: float = 1.4
    dt_record: float | None = None  # None: pick a CFL-stable step


@dataclass(frozen=True)
class WaveletConfig:
    peak_frequency: float = 15.0


@dataclass(frozen=True)
class ScattererConfig:
    z: float = 500.0
    x: float = 510.0
    relative_amplitude: float = 0.10
    half_cells: int = 1


@dataclass(frozen=True)
class MapConfig:
    workers: int = 2
    max_attempts: int = 2


@dataclass(frozen=True)
class ReduceConfig:
    fan_in: int = 10
    parallel: int = 2
    poll_interval: float = 0.05
    batch_grace: float = 0.25
    singleton_grace: float = 0.5
    deadline: float = 600.0


@dataclass(frozen=True)
class StoreConfig:
    root: str | None = None  # default: <out_dir>/store


@dataclass(frozen=True)
class QueueConfig:
    root: str | None = None  # default: <out_dir>/queue
    visibility_seconds: float = 120.0


@dataclass(frozen=True)
class PricingConfig:
    on_demand_rate: float = 3.629
    low_priority_discount_factor: float = 3.0
    billing_granularity: float = 1.0


@dataclass(frozen=True)
class ReportConfig:
    vm_counts: str | None = None  # comma list; default derived from job count


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 42
    out_dir: str = "rtm_out"
    model: ModelConfig = field(default_factory=ModelConfig)
    survey: SurveyConfig = field(default_factory=SurveyConfig)
    wavelet: WaveletConfig = field(default_factory=WaveletConfig)
    scatterer: ScattererConfig = field(default_factory=ScattererConfig)
    map: MapConfig = field(default_factory=MapConfig)
    reduce: ReduceConfig = field(default_factory=ReduceConfig)
    store: StoreConfig = field(default_factory=StoreConfig)
    queue: QueueConfig = field(default_factory=QueueConfig)
    pricing: PricingConfig = field(default_factory=PricingConfig)
    report: ReportConfig = field(default_factory=ReportConfig)

    def store_root(self) -> Path:
        return Path(self.store.root) if self.store.root else Path(self.out_dir) / "store"

    def queue_root(self) -> Path:
        return Path(self.queue.root) if self.queue.root else Path(self.out_dir) / "queue"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# argparse type for keys whose default (None) does not reveal one
_NONE_TYPES = {
    "survey.dt_record": float,
    "store.root": str,
    "queue.root": str,
    "report.vm_counts": str,
}


def _from_dict(cls, data: dict):
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        if dataclasses.is_dataclass(f.type) or (
            isinstance(f.default_factory, type) and dataclasses.is_dataclass(f.default_factory)
        ):
            kwargs[f.name] = _from_dict(f.default_factory, value)
        elif isinstance(value, list):
            kwargs[f.name] = tuple(value)
        else:
            kwargs[f.name] = value
    unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
    if unknown:
        raise ValueError(f"unknown config keys for {cls.__name__}: {sorted(unknown)}")
    return cls(**kwargs)


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    with open(path) as f:
        return _from_dict(PipelineConfig, json.load(f))


def config_from_dict(data: dict) -> PipelineConfig:
    return _from_dict(PipelineConfig, data)


def _walk(cls, prefix: str = ""):
    for f in dataclasses.fields(cls):
        sub = f.default_factory if f.default_factory is not dataclasses.MISSING else None
        dotted = f"{prefix}{f.name}"
        if isinstance(sub, type) and dataclasses.is_dataclass(sub):
            yield from _walk(sub, dotted + ".")
        else:
            yield dotted, f


def _leaf_type(dotted: str, f) -> type:
    if dotted in _NONE_TYPES:
        return _NONE_TYPES[dotted]
    if f.default is dataclasses.MISSING:
        return str
    if isinstance(f.default, bool):
        return bool
    if isinstance(f.default, int):
        return int
    if isinstance(f.default, float):
        return float
    if isinstance(f.default, tuple):
        return tuple
    return str


def add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE", help="pipeline config JSON")
    for dotted, f in _walk(PipelineConfig):
        typ = _leaf_type(dotted, f)
        if typ is tuple:
            parser.add_argument(
                f"--{dotted}",
                dest=dotted,
                type=lambda s: tuple(float(x) for x in s.split(",")),
                default=None,
                help=f"override {dotted} (comma-separated)",
            )
        else:
            parser.add_argument(
                f"--{dotted}", dest=dotted, type=typ, default=None, help=f"override {dotted}"
            )


def config_from_args(args: argparse.Namespace) -> PipelineConfig:
    cfg = load_config(getattr(args, "config", None))
    data = cfg.to_dict()
    for dotted, _ in _walk(PipelineConfig):
        value = getattr(args, dotted, None)
        if value is None:
            continue
        node: Any = data
        *parents, leaf = dotted.split(".")
        for p in parents:
            node = node[p]
        node[leaf] = value
    return _from_dict(PipelineConfig, data)
