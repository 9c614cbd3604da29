from __future__ import annotations

import hashlib
import json
import os
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum

from ..errors import BackendProtocolError, ConfigError
from ..timeline import VideoContext


class Role(str, Enum):
    QUESTIONER = "questioner"
    SOLVER = "solver"


@dataclass(frozen=True)
class PromptRequest:
    """A request for ``sample_count`` completions of one prompt.

    ``video`` set to ``None`` encodes the without-video Solver condition.
    ``unit_id`` ties Solver prompts to the unit they ask about so that two
    textually identical questions never share rollouts.
    """

    role: Role
    video: VideoContext | None
    body: str
    sample_count: int = 1
    temperature: float = 1.0
    seed: int = 0
    frame_timestamps: tuple[float, ...] | None = None
    unit_id: str | None = None
    model: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "role", Role(self.role))
        if self.role is Role.QUESTIONER and self.video is None:
            raise ValueError("questioner requests require a video")
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if self.frame_timestamps is not None:
            object.__setattr__(self, "frame_timestamps", tuple(self.frame_timestamps))

    @property
    def video_key(self) -> str:
        return "novideo" if self.video is None else self.video.video_id

    @property
    def fingerprint(self) -> str:
        """Stable request identity, independent of how many samples are drawn."""
        return _digest([self.role.value, self.video_key, self.unit_id or "", self.body, self.seed])

    def sample_key(self, index: int) -> str:
        return _digest([self.fingerprint, index])


def _digest(parts: list) -> str:
    blob = json.dumps(parts, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class BackendConfig:
    kind: str = "scripted"
    endpoint_url: str | None = None
    model_name: str | None = None
    script_path: str | None = None
    max_parallel: int = 4
    retry_limit: int = 3
    timeout_s: float = 120.0
    temperature: float = 1.0

    def validate(self) -> None:
        if self.kind not in ("http", "scripted"):
            raise ConfigError(f"unknown backend kind {self.kind!r}")
        endpoint = os.environ.get("EVICOEVO_BACKEND_URL") or self.endpoint_url
        if self.kind == "http" and not (endpoint and self.model_name):
            raise ConfigError("http backend requires endpoint_url and model_name")
        if self.kind == "scripted" and not self.script_path:
            raise ConfigError("scripted backend requires script_path")
        if self.max_parallel < 1:
            raise ConfigError("max_parallel must be >= 1")
        if self.retry_limit < 0:
            raise ConfigError("retry_limit must be >= 0")


class Backend(ABC):
    """Completion backend; ``complete`` is safe to call from many threads.

    At most ``max_parallel`` requests are in flight at once.
    """

    def __init__(self, max_parallel: int = 4) -> None:
        if max_parallel < 1:
            raise ValueError("max_parallel must be >= 1")
        self.max_parallel = max_parallel
        self._slots = threading.BoundedSemaphore(max_parallel)
        self._lock = threading.Lock()
        self.in_flight = 0
        self.peak_in_flight = 0

    def complete(self, request: PromptRequest) -> list[str]:
        with self._slots:
            with self._lock:
                self.in_flight += 1
                self.peak_in_flight = max(self.peak_in_flight, self.in_flight)
            try:
                outputs = self._complete(request)
            finally:
                with self._lock:
                    self.in_flight -= 1
        if len(outputs) != request.sample_count:
            raise BackendProtocolError(
                f"expected {request.sample_count} completions, got {len(outputs)}", request.fingerprint
            )
        return outputs

    @abstractmethod
    def _complete(self, request: PromptRequest) -> list[str]:
        ...

    def close(self) -> None:
        pass


@dataclass
class RolloutCache:
    """Per-iteration cache keyed by request fingerprint.

    A longer cached list serves shorter requests by prefix, since sample
    ``i`` of a request is the same draw regardless of the requested count.
    """

    _entries: dict[str, list[str]] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)
    hits: int = 0
    misses: int = 0

    def complete(self, backend: Backend, request: PromptRequest) -> list[str]:
        key = request.fingerprint
        with self._lock:
            cached = self._entries.get(key)
            if cached is not None and len(cached) >= request.sample_count:
                self.hits += 1
                return list(cached[: request.sample_count])
            self.misses += 1
        outputs = backend.complete(request)
        with self._lock:
            current = self._entries.get(key)
            if current is None or len(current) < len(outputs):
                self._entries[key] = list(outputs)
        return outputs

    def clear(self) -> None:
        with self._lock:
            self._entries.clear()
