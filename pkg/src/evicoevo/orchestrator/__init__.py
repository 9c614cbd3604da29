"""Iteration driver: configuration, persisted state, and the phase engine."""

from .config import EngineConfig, EngineSettings, all_keys
from .engine import Engine, derive_seed, load_video_manifest, select_videos
from .state import IterationState, OutputLock, Phase, persist, resume, write_atomic

__all__ = [
    "Engine",
    "EngineConfig",
    "EngineSettings",
    "IterationState",
    "OutputLock",
    "Phase",
    "all_keys",
    "derive_seed",
    "load_video_manifest",
    "persist",
    "resume",
    "select_videos",
    "write_atomic",
]
