"""Temporal interval math: spans, temporal IoU, alignment reward, span consensus."""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from typing import Sequence

from .errors import InvalidSpanError, InvalidVideoError

TOLERANCE = 1e-9


@dataclass(frozen=True)
class TimeSpan:
    """Interval ``[start_s, end_s]`` in seconds, ``0 <= start_s < end_s``."""

    start_s: float
    end_s: float

    def __post_init__(self) -> None:
        start, end = float(self.start_s), float(self.end_s)
        if not (math.isfinite(start) and math.isfinite(end)):
            raise InvalidSpanError(f"non-finite span [{self.start_s}, {self.end_s}]")
        if start < 0:
            raise InvalidSpanError(f"negative span start {start}")
        if not start < end:
            raise InvalidSpanError(f"span start {start} must be before end {end}")
        object.__setattr__(self, "start_s", start)
        object.__setattr__(self, "end_s", end)

    @property
    def length(self) -> float:
        return self.end_s - self.start_s

    def within(self, duration_s: float) -> bool:
        return self.start_s >= 0 and self.end_s <= duration_s

    def contains(self, t: float) -> bool:
        """Start-inclusive, end-exclusive membership test for a timestamp."""
        return self.start_s <= t < self.end_s

    def as_list(self) -> list[float]:
        return [self.start_s, self.end_s]


@dataclass(frozen=True)
class VideoContext:
    video_id: str
    uri: str
    duration_s: float

    def __post_init__(self) -> None:
        duration = float(self.duration_s)
        if not math.isfinite(duration) or duration <= 0:
            raise InvalidVideoError(f"video {self.video_id!r} has non-positive duration {self.duration_s}")
        object.__setattr__(self, "duration_s", duration)

    def to_dict(self) -> dict:
        return {"id": self.video_id, "uri": self.uri, "duration_s": self.duration_s}

    @classmethod
    def from_dict(cls, data: dict) -> VideoContext:
        return cls(video_id=str(data["id"]), uri=str(data.get("uri", "")), duration_s=data["duration_s"])


def clamp_span(start: float, end: float, duration_s: float) -> TimeSpan | None:
    """Clamp raw boundaries into ``[0, duration_s]``; ``None`` if nothing valid remains."""
    if not (math.isfinite(start) and math.isfinite(end)):
        return None
    start = min(max(start, 0.0), duration_s)
    end = min(max(end, 0.0), duration_s)
    if not start < end:
        return None
    return TimeSpan(start, end)


def tiou(a: TimeSpan, b: TimeSpan) -> float:
    """Temporal IoU with the hull ``max(end) - min(start)`` as denominator."""
    inter = max(0.0, min(a.end_s, b.end_s) - max(a.start_s, b.start_s))
    hull = max(a.end_s, b.end_s) - min(a.start_s, b.start_s)
    return inter / hull


def alignment_reward(pred: TimeSpan, target: TimeSpan, duration_s: float) -> float:
    """IoU scaled by the start- and end-boundary closeness factors.

    Each factor is ``max(0, 1 - |pred_b - target_b| / duration_s)``.
    """
    if not duration_s > 0:
        raise InvalidVideoError(f"duration must be positive, got {duration_s}")
    reward = tiou(pred, target)
    for p, t in ((pred.start_s, target.start_s), (pred.end_s, target.end_s)):
        reward *= max(0.0, 1.0 - abs(p - t) / duration_s)
    return reward


def median_consensus(spans: Sequence[TimeSpan]) -> TimeSpan | None:
    """Elementwise median of starts and ends; ``None`` when empty or degenerate.

    Even counts average the two central values.
    """
    if not spans:
        return None
    start = statistics.median(s.start_s for s in spans)
    end = statistics.median(s.end_s for s in spans)
    if not start < end:
        return None
    return TimeSpan(start, end)


def merged_coverage(spans: Sequence[TimeSpan]) -> float:
    """Total length of the union of ``spans``."""
    total = 0.0
    cur_start = cur_end = None
    for span in sorted(spans, key=lambda s: (s.start_s, s.end_s)):
        if cur_end is None or span.start_s > cur_end:
            if cur_end is not None:
                total += cur_end - cur_start
            cur_start, cur_end = span.start_s, span.end_s
        else:
            cur_end = max(cur_end, span.end_s)
    if cur_end is not None:
        total += cur_end - cur_start
    return total
