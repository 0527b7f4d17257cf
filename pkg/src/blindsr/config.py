"""Configuration loading, validation and serialization.

The config file is a YAML document whose sections mirror the dataclasses
in this package (train, generator, discriminator, benchmark; the
degradation space and loss weights nest under ``train``). Every key has
a default; unknown keys are rejected and validation errors name the
exact key path. Command-line flags override file values, which override
defaults.
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field

import yaml

from .discriminator import DiscriminatorConfig
from .generator import GeneratorConfig
from .training import TrainConfig

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid configuration; the message carries the offending key path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


@dataclass
class BenchmarkConfig:
    ladder: str = "desk"  # desk | full
    repeats: int = 20
    warmup: int = 3

    def __post_init__(self):
        if self.ladder not in ("desk", "full"):
            raise ValueError(f"ladder must be 'desk' or 'full', got {self.ladder!r}")
        if self.repeats < 1 or self.warmup < 0:
            raise ValueError("repeats must be >= 1 and warmup >= 0")


@dataclass
class AppConfig:
    schema_version: int = SCHEMA_VERSION
    train: TrainConfig = field(default_factory=TrainConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    benchmark: BenchmarkConfig = field(default_factory=BenchmarkConfig)

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {self.schema_version}")


def _convert(value, ftype, path):
    origin = typing.get_origin(ftype)
    if dataclasses.is_dataclass(ftype):
        if not isinstance(value, dict):
            raise ConfigError(path, f"expected a mapping, got {type(value).__name__}")
        return _from_dict(ftype, value, path)
    if origin in (tuple, list):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, f"expected a sequence, got {type(value).__name__}")
        args = typing.get_args(ftype)
        if args and args[-1] is Ellipsis:
            return tuple(_convert(v, args[0], f"{path}[{i}]") for i, v in enumerate(value))
        if args:
            if len(value) != len(args):
                raise ConfigError(path, f"expected {len(args)} entries, got {len(value)}")
            return tuple(_convert(v, t, f"{path}[{i}]")
                         for i, (v, t) in enumerate(zip(value, args)))
        return tuple(value)
    if ftype is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if ftype is int and isinstance(value, bool):
        raise ConfigError(path, "expected an integer, got a boolean")
    return value


def _from_dict(cls, data: dict, path: str = ""):
    hints = typing.get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        key_path = f"{path}.{key}" if path else key
        if key not in known:
            raise ConfigError(key_path, "unknown config key")
        kwargs[key] = _convert(value, hints[key], key_path)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(path or cls.__name__, str(exc)) from exc


def config_to_dict(obj) -> dict:
    """Dataclass tree to plain JSON/YAML-friendly nested dicts and lists."""

    def convert(value):
        if dataclasses.is_dataclass(value):
            return {f.name: convert(getattr(value, f.name))
                    for f in dataclasses.fields(value)}
        if isinstance(value, (list, tuple)):
            return [convert(v) for v in value]
        return value

    return convert(obj)


def app_config_from_dict(data: dict) -> AppConfig:
    if not isinstance(data, dict):
        raise ConfigError("", "config root must be a mapping")
    return _from_dict(AppConfig, data)


def default_app_config() -> AppConfig:
    return AppConfig()


def load_config_file(path) -> dict:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError("", f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError("", f"cannot parse config file {path}: {exc}")
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("", f"config file {path} must contain a mapping")
    return data


def set_by_path(tree: dict, dotted: str, value):
    """Set a value inside a nested dict by dotted key path."""
    keys = dotted.split(".")
    node = tree
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(dotted, "cannot override a scalar with a mapping")
    node[keys[-1]] = value


def effective_config(config_path=None, overrides: dict | None = None) -> AppConfig:
    """Resolve defaults <- file <- flag overrides into a validated AppConfig.

    ``overrides`` maps dotted key paths (e.g. ``train.batch_size``) to
    values.
    """
    data = load_config_file(config_path) if config_path else {}
    for dotted, value in (overrides or {}).items():
        set_by_path(data, dotted, value)
    return app_config_from_dict(data)
