"""Single-document run configuration with strict key checking.

A config file is one JSON object with optional sections; CLI flags
override file values and the effective config is echoed into artifacts.
Defaults follow the reference settings: 2 extraction hops, top-100 nodes
per hop, gamma 0.5, max aggregator, beam 3, Adam(0.9, 0.999, 1e-6).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field


class ConfigError(ValueError):
    pass


@dataclass
class ExtractionSection:
    hops: int = 2
    top_b: int = 100
    pos_filter: bool = True


@dataclass
class FlowSection:
    gamma: float = 0.5
    aggregator: str = "max"
    hops: int = 2


@dataclass
class ModelSection:
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    d_ff: int = 128
    max_len: int = 128
    d_g: int = 64
    gnn_layers: int = 2


@dataclass
class TrainSection:
    alpha: float = 1.0
    beta: float = 1.0
    lr0: float = 1e-3
    total_steps: int = 500
    batch_size: int = 16
    seed: int = 0
    checkpoint_every: int = 100


@dataclass
class GenerateSection:
    beam: int = 3
    max_len: int = 32


@dataclass
class RunConfig:
    extraction: ExtractionSection = field(default_factory=ExtractionSection)
    flow: FlowSection = field(default_factory=FlowSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    generate: GenerateSection = field(default_factory=GenerateSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_SECTIONS = {f.name: f.default_factory for f in dataclasses.fields(RunConfig)}


def _fill(section_cls, values: dict, where: str):
    known = {f.name for f in dataclasses.fields(section_cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError("unknown keys in %s: %s" % (where, ", ".join(sorted(unknown))))
    return section_cls(**values)


def from_dict(doc: dict) -> RunConfig:
    unknown = set(doc) - set(_SECTIONS)
    if unknown:
        raise ConfigError("unknown config sections: %s" % ", ".join(sorted(unknown)))
    kwargs = {}
    for name, factory in _SECTIONS.items():
        if name in doc:
            kwargs[name] = _fill(type(factory()), doc[name], name)
    return RunConfig(**kwargs)


def load(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError("config parse failure: %s" % e)
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    return from_dict(doc)


def apply_overrides(cfg: RunConfig, overrides: dict[str, object]) -> RunConfig:
    """`overrides` maps dotted keys like 'train.lr0' to values; None skipped."""
    for key, value in overrides.items():
        if value is None:
            continue
        section, _, name = key.partition(".")
        target = getattr(cfg, section)
        if not hasattr(target, name):
            raise ConfigError("unknown config key %s" % key)
        setattr(target, name, value)
    return cfg
