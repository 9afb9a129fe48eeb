"""Experiment configuration files.

A config is a flat key=value file with one section per subsystem, e.g.::

    [gen]
    width = 8
    height = 8

    [schedule]
    kind = evolved
    max_maps = 450

Every key mirrors a dataclass field; omitted keys keep their defaults, and
serialize(parse(text)) is a fixed point.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field
from pathlib import Path

from .agent.agent import AgentConfig
from .curriculum import Schedule
from .game.engine import GameConfig
from .generators.constructive import GenConfig
from .generators.evolution import EvoConfig
from .lossnet import LossNetConfig


class ConfigError(ValueError):
    """A config file problem, named down to the offending section.key."""


@dataclass
class RunSettings:
    master_seed: int = 0
    out_dir: str = "runs"


@dataclass
class ExperimentConfig:
    game: GameConfig = field(default_factory=GameConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    lossnet: LossNetConfig = field(default_factory=LossNetConfig)
    gen: GenConfig = field(default_factory=GenConfig)
    evo: EvoConfig = field(default_factory=EvoConfig)
    schedule: Schedule = field(default_factory=Schedule)
    run: RunSettings = field(default_factory=RunSettings)


SECTION_TYPES = {
    "game": GameConfig,
    "agent": AgentConfig,
    "lossnet": LossNetConfig,
    "gen": GenConfig,
    "evo": EvoConfig,
    "schedule": Schedule,
    "run": RunSettings,
}


def _coerce(raw: str, default, where: str):
    kind = type(default)
    raw = raw.strip()
    try:
        if kind is bool:
            lowered = raw.lower()
            if lowered in ("true", "yes", "1", "on"):
                return True
            if lowered in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(
            f"{where}: cannot read {raw!r} as {kind.__name__}") from None


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None

    sections: dict[str, object] = {}
    for section in parser.sections():
        cls = SECTION_TYPES.get(section)
        if cls is None:
            raise ConfigError(f"unknown section [{section}]; expected one of "
                              + ", ".join(sorted(SECTION_TYPES)))
        defaults = {f.name: f.default for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in parser.items(section):
            if key not in defaults:
                raise ConfigError(f"unknown key {section}.{key}")
            kwargs[key] = _coerce(raw, defaults[key], f"{section}.{key}")
        try:
            sections[section] = cls(**kwargs)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {exc}") from None
    return ExperimentConfig(**sections)


def serialize_config(cfg: ExperimentConfig) -> str:
    out = io.StringIO()
    writer = configparser.ConfigParser(interpolation=None)
    for section, cls in SECTION_TYPES.items():
        value = getattr(cfg, section)
        writer[section] = {f.name: str(getattr(value, f.name))
                          for f in dataclasses.fields(cls)}
    writer.write(out)
    return out.getvalue()


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(serialize_config(cfg))
