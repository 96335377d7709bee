"""Experiment configuration: typed sections in an INI-style text file.

Example::

    [data]
    source = synthetic
    n_classes = 12

    [train]
    mode = kaizen
    lambda = 0.5+0.5

Values are coerced to the type of the field's default. Unknown sections or
keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field
from pathlib import Path

from .augment import AugmentConfig
from .continual import ContinualConfig, LambdaSchedule
from .model import ModelConfig


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    source: str = "synthetic"  # synthetic | wisdm | cache
    path: str = ""
    n_classes: int = 12
    n_subjects: int = 8
    windows_per_class: int = 200
    noise: float = 0.3
    holdout_fraction: float = 0.22
    window_length: int = 384


@dataclass
class TasksConfig:
    source: str = "seeded"  # seeded | canonical
    n_tasks: int = 6


@dataclass
class RunConfig:
    seed: int = 0
    output_dir: str = ""
    run_id: str = ""
    replay_fraction: float = 0.01
    baseline_seeds: int = 5


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    tasks: TasksConfig = field(default_factory=TasksConfig)
    train: ContinualConfig = field(default_factory=ContinualConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def __post_init__(self):
        # the augmentation section is the single source of truth
        self.train.augment = self.augment

    def run_id(self) -> str:
        if self.run.run_id:
            return self.run.run_id
        return f"{self.train.mode}-{self.train.ssl_method}-l{self.train.schedule}-s{self.run.seed}"


_SECTIONS = ("data", "tasks", "train", "augment", "model", "run")
_SKIP = {("train", "augment")}
_ALIASES = {"lambda": "schedule"}


def _attr(key: str) -> str:
    return _ALIASES.get(key, key)


def _key(attr: str) -> str:
    return {v: k for k, v in _ALIASES.items()}.get(attr, attr)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, LambdaSchedule):
        return f"{value.a!r}+{value.b!r}"
    return str(value)


def _coerce_like(default, text: str, where: str):
    text = text.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, LambdaSchedule):
            return LambdaSchedule.parse(text)
        if isinstance(default, tuple):
            items = [s for s in (p.strip() for p in text.split(",")) if s]
            kind = type(default[0]) if default else float
            return tuple(kind(s) for s in items)
        return text
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def override(cfg: ExperimentConfig, updates: dict) -> ExperimentConfig:
    """Copy of ``cfg`` with ``{"section.key": value}`` updates; strings are coerced."""
    new = loads(dumps(cfg))
    for dotted, value in updates.items():
        section, _, key = dotted.partition(".")
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section in override {dotted!r}")
        obj = getattr(new, section)
        attr = _attr(key)
        if (section, attr) in _SKIP or not any(f.name == attr for f in dataclasses.fields(obj)):
            raise ConfigError(f"unknown key in override {dotted!r}")
        if isinstance(value, str):
            value = _coerce_like(getattr(obj, attr), value, dotted)
        setattr(obj, attr, value)
        try:
            obj.__post_init__() if hasattr(obj, "__post_init__") else None
        except ValueError as exc:
            raise ConfigError(f"{dotted}: {exc}") from None
    new.train.augment = new.augment
    return new


def loads(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    cfg = ExperimentConfig()
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        obj = getattr(cfg, section)
        for key, raw in parser.items(section):
            attr = _attr(key)
            if (section, attr) in _SKIP or not any(f.name == attr for f in dataclasses.fields(obj)):
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            setattr(obj, attr, _coerce_like(getattr(obj, attr), raw, f"[{section}] {key}"))
        try:
            obj.__post_init__() if hasattr(obj, "__post_init__") else None
        except ValueError as exc:
            raise ConfigError(f"[{section}] {exc}") from None
    cfg.train.augment = cfg.augment
    return cfg


def load(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return loads(text)


def dumps(cfg: ExperimentConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for section in _SECTIONS:
        obj = getattr(cfg, section)
        parser.add_section(section)
        for f in dataclasses.fields(obj):
            if (section, f.name) in _SKIP:
                continue
            parser.set(section, _key(f.name), _fmt(getattr(obj, f.name)))
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
