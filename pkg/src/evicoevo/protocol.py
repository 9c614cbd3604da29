"""Wire formats for Questioner and Solver outputs.

Questioner output is a single JSON object, optionally wrapped in a code fence::

    {"evidence": [{"start": 12.0, "end": 18.5, "description": "..."}],
     "question": "...", "options": ["...", "...", "...", "..."], "answer": "B"}

Solver output carries tagged fields, the last occurrence of each tag wins::

    <answer>B</answer><span>4.0,8.0</span>
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Any

from .timeline import TimeSpan, VideoContext, clamp_span

OPTION_LABELS = ("A", "B", "C", "D")
MAX_EVIDENCE_SPANS = 4
FORMAT_BONUS = 0.1


class FormatError(str, Enum):
    MISSING_FIELD = "missing-field"
    BAD_JSON = "bad-json"
    BAD_SPAN_ORDER = "bad-span-order"
    BAD_LABEL = "bad-label"
    SPAN_OUT_OF_RANGE = "span-out-of-range"
    WRONG_OPTION_COUNT = "wrong-option-count"


@dataclass(frozen=True)
class FormatVerdict:
    ok: bool
    reason: FormatError | None = None

    def __post_init__(self) -> None:
        if self.ok != (self.reason is None):
            raise ValueError("a verdict is ok exactly when it carries no failure reason")

    @classmethod
    def passed(cls) -> FormatVerdict:
        return cls(True, None)

    @classmethod
    def failed(cls, reason: FormatError) -> FormatVerdict:
        return cls(False, FormatError(reason))

    def to_dict(self) -> dict:
        return {"ok": self.ok, "reason": None if self.reason is None else self.reason.value}

    @classmethod
    def from_dict(cls, data: dict) -> FormatVerdict:
        reason = data.get("reason")
        return cls(bool(data["ok"]), None if reason is None else FormatError(reason))


@dataclass(frozen=True)
class Evidence:
    span: TimeSpan
    description: str


@dataclass(frozen=True)
class SupervisionUnit:
    """One Questioner sample: evidence first, then the question and its keyed answer."""

    unit_id: str
    video: VideoContext
    evidence: tuple[Evidence, ...]
    question: str
    options: tuple[str, ...]
    answer: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "evidence", tuple(self.evidence))
        object.__setattr__(self, "options", tuple(self.options))
        if not 1 <= len(self.evidence) <= MAX_EVIDENCE_SPANS:
            raise ValueError(f"expected 1..{MAX_EVIDENCE_SPANS} evidence spans, got {len(self.evidence)}")
        for ev in self.evidence:
            if not ev.span.within(self.video.duration_s):
                raise ValueError(f"evidence span {ev.span} outside video duration {self.video.duration_s}")
        if len(self.options) != len(OPTION_LABELS):
            raise ValueError(f"expected {len(OPTION_LABELS)} options, got {len(self.options)}")
        if not self.question.strip() or any(not o.strip() for o in self.options):
            raise ValueError("question and options must be non-empty")
        if self.answer not in OPTION_LABELS:
            raise ValueError(f"answer {self.answer!r} is not an option label")

    @property
    def spans(self) -> list[TimeSpan]:
        return [ev.span for ev in self.evidence]


@dataclass(frozen=True)
class RolloutResponse:
    raw_text: str
    answer: str | None
    span: TimeSpan | None
    valid: bool

    def __post_init__(self) -> None:
        if self.valid and self.answer is None:
            raise ValueError("a valid rollout must carry an answer")


# ---------------------------------------------------------------- questioner

_FENCE_RE = re.compile(r"```(?:json)?\s*(.*?)\s*```", re.DOTALL)


def _loads_object(text: str) -> dict | None:
    try:
        obj = json.loads(text)
    except (ValueError, RecursionError):
        return None
    return obj if isinstance(obj, dict) else None


def extract_json_object(text: str) -> dict | None:
    """Direct parse, then fenced block, then first balanced ``{...}`` region."""
    text = text.strip()
    if not text:
        return None
    obj = _loads_object(text)
    if obj is not None:
        return obj
    match = _FENCE_RE.search(text)
    if match:
        obj = _loads_object(match.group(1))
        if obj is not None:
            return obj
    start = text.find("{")
    if start == -1:
        return None
    depth = 0
    in_string = escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
        elif ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return _loads_object(text[start : i + 1])
    return None


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _derived_unit_id(video: VideoContext, obj: dict) -> str:
    payload = json.dumps([video.video_id, obj], sort_keys=True, ensure_ascii=False, default=str)
    return f"{video.video_id}-{hashlib.sha256(payload.encode('utf-8')).hexdigest()[:12]}"


def parse_questioner_output(
    text: str, video: VideoContext, unit_id: str | None = None
) -> tuple[SupervisionUnit | None, FormatVerdict]:
    """Parse a Questioner response into a unit; never raises.

    The first violated rule determines the failure code. ``unit_id`` takes
    precedence over a ``"unit_id"`` key in the payload; without either the
    id is derived from the video and payload content.
    """
    fail = FormatVerdict.failed
    obj = extract_json_object(text) if isinstance(text, str) else None
    if obj is None:
        return None, fail(FormatError.BAD_JSON)
    if any(key not in obj for key in ("evidence", "question", "options", "answer")):
        return None, fail(FormatError.MISSING_FIELD)

    evidence_raw, question, options, answer = obj["evidence"], obj["question"], obj["options"], obj["answer"]
    if not isinstance(evidence_raw, list) or not isinstance(question, str) or not isinstance(answer, str):
        return None, fail(FormatError.BAD_JSON)
    if not isinstance(options, list):
        return None, fail(FormatError.BAD_JSON)
    if not evidence_raw:
        return None, fail(FormatError.MISSING_FIELD)
    if len(evidence_raw) > MAX_EVIDENCE_SPANS:
        return None, fail(FormatError.BAD_JSON)
    for item in evidence_raw:
        if not isinstance(item, dict):
            return None, fail(FormatError.BAD_JSON)
        if any(key not in item for key in ("start", "end", "description")):
            return None, fail(FormatError.MISSING_FIELD)
        if not (_is_number(item["start"]) and _is_number(item["end"]) and isinstance(item["description"], str)):
            return None, fail(FormatError.BAD_JSON)
        if not (math.isfinite(item["start"]) and math.isfinite(item["end"])):
            return None, fail(FormatError.BAD_JSON)
    if len(options) != len(OPTION_LABELS):
        return None, fail(FormatError.WRONG_OPTION_COUNT)
    if not all(isinstance(o, str) for o in options):
        return None, fail(FormatError.BAD_JSON)

    label = answer.strip()
    if not label:
        return None, fail(FormatError.MISSING_FIELD)
    if label not in OPTION_LABELS:
        return None, fail(FormatError.BAD_LABEL)
    if not question.strip() or any(not o.strip() for o in options):
        return None, fail(FormatError.MISSING_FIELD)
    if any(not item["description"].strip() for item in evidence_raw):
        return None, fail(FormatError.MISSING_FIELD)

    evidence = []
    for item in evidence_raw:
        start, end = float(item["start"]), float(item["end"])
        if not start < end:
            return None, fail(FormatError.BAD_SPAN_ORDER)
        span = clamp_span(start, end, video.duration_s)
        if span is None:
            return None, fail(FormatError.SPAN_OUT_OF_RANGE)
        evidence.append(Evidence(span, item["description"]))

    if unit_id is None:
        embedded = obj.get("unit_id")
        unit_id = embedded if isinstance(embedded, str) and embedded else _derived_unit_id(video, obj)
    unit = SupervisionUnit(
        unit_id=unit_id,
        video=video,
        evidence=tuple(evidence),
        question=question,
        options=tuple(options),
        answer=label,
    )
    return unit, FormatVerdict.passed()


def unit_payload(unit: SupervisionUnit) -> dict:
    return {
        "unit_id": unit.unit_id,
        "evidence": [
            {"start": ev.span.start_s, "end": ev.span.end_s, "description": ev.description}
            for ev in unit.evidence
        ],
        "question": unit.question,
        "options": list(unit.options),
        "answer": unit.answer,
    }


def serialize_unit(unit: SupervisionUnit) -> str:
    """Canonical JSON text; ``parse_questioner_output`` inverts it for the same video."""
    return json.dumps(unit_payload(unit), ensure_ascii=False)


# -------------------------------------------------------------------- solver

_ANSWER_RE = re.compile(r"<answer>(.*?)</answer>", re.DOTALL | re.IGNORECASE)
_SPAN_RE = re.compile(r"<span>(.*?)</span>", re.DOTALL | re.IGNORECASE)
_SPAN_PAYLOAD_RE = re.compile(r"\s*([-+]?[0-9]+(?:\.[0-9]*)?)\s*,\s*([-+]?[0-9]+(?:\.[0-9]*)?)\s*")


def parse_solver_output(text: str, video: VideoContext | None = None, duration_s: float | None = None) -> RolloutResponse:
    """Extract the final answer and span tags from a Solver response.

    A missing or garbled answer makes the rollout invalid. A garbled or
    empty span only drops the span. Spans are clamped into the video.
    """
    if not isinstance(text, str):
        text = ""
    if duration_s is None and video is not None:
        duration_s = video.duration_s

    answers = _ANSWER_RE.findall(text)
    answer = answers[-1].strip() if answers else None
    if answer not in OPTION_LABELS:
        answer = None

    span = None
    spans = _SPAN_RE.findall(text)
    if spans:
        match = _SPAN_PAYLOAD_RE.fullmatch(spans[-1])
        if match:
            start, end = float(match.group(1)), float(match.group(2))
            if duration_s is not None:
                span = clamp_span(start, end, duration_s)
            elif 0 <= start < end and math.isfinite(end):
                span = TimeSpan(start, end)

    return RolloutResponse(raw_text=text, answer=answer, span=span, valid=answer is not None)


def render_solver_output(answer: str, span: TimeSpan | None = None, reasoning: str = "") -> str:
    """Produce Solver-format text, used by prompt examples and fixtures."""
    out = f"{reasoning}<answer>{answer}</answer>"
    if span is not None:
        out += f"<span>{span.start_s},{span.end_s}</span>"
    return out


def format_reward(verdict: FormatVerdict, bonus: float = FORMAT_BONUS) -> float:
    return bonus if verdict.ok else 0.0
