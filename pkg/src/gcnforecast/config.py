"""Run configuration: one JSON document with a section per module config.

Sections are ``model``, ``preprocess``, ``window``, ``loss``, ``curriculum``,
``metric``, ``fusion``, ``train``, ``synth`` and ``sweep``; the top level also
holds ``seed``, ``train_data``, ``val_data`` and ``out_dir``. Any value can be
overridden with a dotted key, e.g. ``model.num_blocks=8``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields, is_dataclass, replace

from .core import FORMAT_VERSION
from .gcnet import CHECKPOINT_VERSION
from .metrics import MetricConfig
from .predict import FusionConfig
from .preprocess import PreprocessConfig, WindowSpec
from .synth import SynthSpec
from .train import CurriculumConfig, LossConfig, ModelOptions, TrainConfig, TrainSetup


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SweepGrid:
    scales: tuple = (10.0, 50.0, 100.0)
    num_blocks: tuple = (8, 12, 16)
    hidden_channels: tuple = (256,)
    jobs: int = 1

    def __post_init__(self):
        for name in ("scales", "num_blocks", "hidden_channels"):
            values = tuple(getattr(self, name))
            if not values:
                raise ValueError(f"sweep.{name} must not be empty")
            object.__setattr__(self, name, values)
        if self.jobs < 1:
            raise ValueError("sweep.jobs must be >= 1")

    def points(self):
        return [(s, b, h) for s in self.scales for b in self.num_blocks for h in self.hidden_channels]


SECTIONS = {
    "model": ModelOptions,
    "preprocess": PreprocessConfig,
    "window": WindowSpec,
    "loss": LossConfig,
    "curriculum": CurriculumConfig,
    "metric": MetricConfig,
    "fusion": FusionConfig,
    "train": TrainConfig,
    "synth": SynthSpec,
    "sweep": SweepGrid,
}
TOP_LEVEL = ("seed", "train_data", "val_data", "out_dir")


@dataclass(frozen=True)
class RunConfig:
    model: ModelOptions = ModelOptions()
    preprocess: PreprocessConfig = PreprocessConfig()
    window: WindowSpec = WindowSpec()
    loss: LossConfig = LossConfig()
    curriculum: CurriculumConfig = CurriculumConfig()
    metric: MetricConfig = MetricConfig()
    fusion: FusionConfig = FusionConfig()
    train: TrainConfig = TrainConfig()
    synth: SynthSpec = SynthSpec()
    sweep: SweepGrid = field(default_factory=SweepGrid)
    seed: int = 0
    train_data: str | None = None
    val_data: str | None = None
    out_dir: str = "out"

    def setup(self):
        return TrainSetup(
            model=self.model,
            train=self.train,
            loss=self.loss,
            curriculum=self.curriculum,
            window=self.window,
            preprocess=self.preprocess,
            metric=self.metric,
        )

    def to_dict(self):
        out = {name: _plain(getattr(self, name)) for name in SECTIONS}
        out.update({name: getattr(self, name) for name in TOP_LEVEL})
        return out

    def snapshot(self, **extra):
        """JSON text of the resolved config plus seed and format versions."""
        doc = {
            "config": self.to_dict(),
            "seed": self.seed,
            "versions": {"dataset_format": FORMAT_VERSION, "checkpoint": CHECKPOINT_VERSION},
        }
        doc.update(extra)
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def validate_paths(self, *names):
        for name in names:
            path = getattr(self, name)
            if path is None:
                raise ConfigError(f"{name} is not set")
            if not os.path.exists(path):
                raise ConfigError(f"{name}: file not found: {path}")


def _plain(obj):
    if is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _tupled(value):
    if isinstance(value, list):
        return tuple(_tupled(v) for v in value)
    return value


def _build(cls, values, prefix):
    if not isinstance(values, dict):
        raise ConfigError(f"section {prefix!r} must be an object")
    known = {f.name for f in fields(cls)}
    for key in values:
        if key not in known:
            raise ConfigError(f"unknown config key {prefix}.{key}")
    try:
        return cls(**{k: _tupled(v) for k, v in values.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {prefix} section: {exc}") from exc


def from_dict(doc):
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    kwargs = {}
    for key, value in doc.items():
        if key in SECTIONS:
            kwargs[key] = _build(SECTIONS[key], value, key)
        elif key in TOP_LEVEL:
            kwargs[key] = value
        else:
            raise ConfigError(f"unknown config key {key}")
    if "seed" in kwargs and not isinstance(kwargs["seed"], int):
        raise ConfigError("seed must be an integer")
    return RunConfig(**kwargs)


def parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(doc, overrides):
    """Apply ``key=value`` strings with dotted keys to a config dict (copied)."""
    doc = json.loads(json.dumps(doc))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        if len(parts) == 1:
            if parts[0] not in TOP_LEVEL:
                raise ConfigError(f"unknown config key {parts[0]}")
            doc[parts[0]] = parse_value(text)
        elif len(parts) == 2 and parts[0] in SECTIONS:
            section, name = parts
            if name not in {f.name for f in fields(SECTIONS[section])}:
                raise ConfigError(f"unknown config key {key}")
            doc.setdefault(section, {})[name] = parse_value(text)
        else:
            raise ConfigError(f"unknown config key {key}")
    return doc


def load_config(path=None, overrides=(), seed=None):
    doc = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    cfg = from_dict(apply_overrides(doc, overrides))
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    return cfg
