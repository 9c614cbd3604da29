"""Engine configuration: INI file with [engine], [backend] and [heuristics] sections."""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Mapping

from ..backend import BackendConfig
from ..errors import ConfigError
from ..pseudo_supervision import CurriculumGate
from ..questioner_rewards import EvidenceHeuristics
from ..solver_training import (
    DEFAULT_ALPHA,
    DEFAULT_EPS,
    KL_COEFFICIENT,
    LEARNING_RATE,
    QUESTIONER_GROUP_SIZE,
    SOLVER_GROUP_SIZE,
)


@dataclass
class EngineSettings:
    video_manifest_path: str = "videos.jsonl"
    output_dir: str = "evicoevo-run"
    seed: int = 0
    iterations: int = 5
    videos_per_iter: int = 600
    units_per_video: int = 1
    m_rollouts: int = 10
    n_pseudo: int = 10
    fresh_pseudo_rollouts: bool = False
    gate_s_min: float = 0.3
    gate_s_max: float = 0.8
    alpha: float = DEFAULT_ALPHA
    fps: float = 2.0
    max_frames: int = 32
    questioner_group_size: int = QUESTIONER_GROUP_SIZE
    solver_group_size: int = SOLVER_GROUP_SIZE
    learning_rate: float = LEARNING_RATE
    kl_coefficient: float = KL_COEFFICIENT
    eps: float = DEFAULT_EPS


@dataclass
class EngineConfig:
    engine: EngineSettings = field(default_factory=EngineSettings)
    backend: BackendConfig = field(default_factory=BackendConfig)
    heuristics: EvidenceHeuristics = field(default_factory=EvidenceHeuristics)

    @property
    def gate(self) -> CurriculumGate:
        return CurriculumGate(self.engine.gate_s_min, self.engine.gate_s_max)

    def validate(self) -> None:
        e = self.engine
        counts = {
            "videos_per_iter": e.videos_per_iter,
            "units_per_video": e.units_per_video,
            "m_rollouts": e.m_rollouts,
            "n_pseudo": e.n_pseudo,
            "max_frames": e.max_frames,
            "questioner_group_size": e.questioner_group_size,
            "solver_group_size": e.solver_group_size,
        }
        for name, value in counts.items():
            if value < 1:
                raise ConfigError(f"{name} must be positive, got {value}")
        if e.iterations < 0:
            raise ConfigError("iterations must be non-negative")
        if e.fps <= 0:
            raise ConfigError("fps must be positive")
        if e.alpha < 0:
            raise ConfigError("alpha must be non-negative")
        CurriculumGate(e.gate_s_min, e.gate_s_max)
        self.heuristics.validate()
        self.backend.validate()

    def sections(self) -> Iterator[tuple[str, Any]]:
        yield "engine", self.engine
        yield "backend", self.backend
        yield "heuristics", self.heuristics

    def set(self, key: str, raw: str) -> None:
        for _, section in self.sections():
            for f in _public_fields(section):
                if f.name == key:
                    setattr(section, key, _coerce(f, raw))
                    return
        raise ConfigError(f"unknown config key {key!r}")

    def dump(self) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        for name, section in self.sections():
            parser[name] = {f.name: _render(getattr(section, f.name)) for f in _public_fields(section)}
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    @classmethod
    def load(cls, path: str | Path | None = None, overrides: Mapping[str, str] | None = None) -> EngineConfig:
        config = cls()
        if path is not None:
            parser = configparser.ConfigParser(interpolation=None)
            try:
                with open(path, encoding="utf-8") as fh:
                    parser.read_file(fh)
            except (OSError, configparser.Error) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            known = dict(config.sections())
            for name in parser.sections():
                if name not in known:
                    raise ConfigError(f"unknown config section [{name}]")
                for key, raw in parser[name].items():
                    config.set(key, raw)
        for key, raw in (overrides or {}).items():
            config.set(key, raw)
        return config


def all_keys() -> list[tuple[str, str]]:
    """(section, key) for every configurable setting."""
    return [(name, f.name) for name, section in EngineConfig().sections() for f in _public_fields(section)]


def _public_fields(section: Any) -> list[dataclasses.Field]:
    return [f for f in dataclasses.fields(section) if f.init and not f.name.startswith("_")]


def _default_of(f: dataclasses.Field) -> Any:
    if f.default is not dataclasses.MISSING:
        return f.default
    return f.default_factory()


def _coerce(f: dataclasses.Field, raw: str) -> Any:
    default = _default_of(f)
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            lowered = raw.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(item.strip() for item in raw.split(",") if item.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {f.name}: {raw!r}") from exc
    if default is None and raw.lower() in ("", "none"):
        return None
    return raw


def _render(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(value)
    return repr(value) if isinstance(value, float) else str(value)
