"""Questioner reward: format bonus plus learnability, video dependency and evidence quality."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Sequence

from .errors import ConfigError, NoValidRolloutsError
from .protocol import FORMAT_BONUS, OPTION_LABELS, FormatVerdict, SupervisionUnit, format_reward
from .timeline import merged_coverage

DEFAULT_EVENT_KEYWORDS = (
    "kick", "throw", "threw", "thrown", "catch", "caught", "jump", "fall", "fell", "hit",
    "push", "pull", "grab", "pick", "open", "close", "enter", "exit", "leave", "left",
    "arrive", "walk", "run", "ran", "sit", "sat", "stand", "stood", "pour", "cut", "lift",
    "drop", "place", "put", "hand", "give", "gave", "take", "took", "eat", "ate", "drink",
    "drank", "wave", "point", "dance", "shoot", "shot", "score", "climb", "ride", "rode",
    "drive", "drove", "turn", "touch", "hold", "held", "carry", "collide", "crash", "hug",
    "shake", "shook", "talk", "speak", "spoke", "interact", "appear", "disappear", "start",
    "stop", "mix", "wash", "write", "wrote", "swing", "press", "remove", "play",
)
DEFAULT_TEMPORAL_KEYWORDS = (
    "before", "after", "then", "while", "when", "during", "first", "finally", "next",
    "later", "earlier", "until", "meanwhile", "afterwards", "subsequently", "begins",
    "ends", "second", "seconds", "sec", "secs", "minute", "minutes",
)
# explicit timestamps: "12s", "3.5 sec", "01:23"
_TIMESTAMP_RE = re.compile(r"\b\d+(?:\.\d+)?\s*(?:s|sec|secs|seconds?)\b|\b\d{1,2}:\d{2}\b", re.IGNORECASE)


@dataclass
class EvidenceHeuristics:
    event_keywords: tuple[str, ...] = DEFAULT_EVENT_KEYWORDS
    temporal_keywords: tuple[str, ...] = DEFAULT_TEMPORAL_KEYWORDS
    format_bonus: float = FORMAT_BONUS
    coverage_suppression_threshold: float = 0.8
    evid_clip_lo: float = 0.0
    evid_clip_hi: float = 0.3
    component_score: float = 0.1
    easy_threshold: float = 0.9
    easy_penalty_value: float = 0.1
    w_learn: float = 0.5
    w_dep: float = 0.3
    _patterns: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def validate(self) -> None:
        if not 0 < self.coverage_suppression_threshold <= 1:
            raise ConfigError("coverage_suppression_threshold must be in (0, 1]")
        if self.evid_clip_lo > self.evid_clip_hi:
            raise ConfigError("evid_clip_lo must not exceed evid_clip_hi")

    def event_pattern(self) -> re.Pattern:
        words = sorted({form for w in self.event_keywords for form in inflections(w)})
        return self._compiled("event", words)

    def temporal_pattern(self) -> re.Pattern:
        return self._compiled("temporal", self.temporal_keywords)

    def _compiled(self, name: str, words: Sequence[str]) -> re.Pattern:
        key = (name, tuple(words))
        if key not in self._patterns:
            alternation = "|".join(re.escape(w) for w in words if w) or r"(?!x)x"
            self._patterns[key] = re.compile(rf"\b(?:{alternation})\b", re.IGNORECASE)
        return self._patterns[key]


def inflections(word: str) -> set[str]:
    """Regular English verb/noun forms of ``word`` (kick -> kicks, kicked, kicking)."""
    word = word.lower()
    forms = {word, word + "s", word + "es", word + "ed", word + "ing"}
    if word.endswith("e"):
        forms |= {word + "d", word[:-1] + "ing"}
    if word.endswith("y"):
        forms |= {word[:-1] + "ies", word[:-1] + "ied"}
    if len(word) >= 3 and word[-1] not in "aeiouwxy" and word[-2] in "aeiou" and word[-3] not in "aeiou":
        forms |= {word + word[-1] + "ed", word + word[-1] + "ing"}
    return forms


@dataclass(frozen=True)
class QuestionerScore:
    r_format: float
    c: float
    r_learn_raw: float
    delta_video: float
    r_dep_raw: float
    s_span: float
    s_event: float
    s_temp: float
    r_evid: float
    easy_penalty: float
    r_q_total: float

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def zero(cls) -> QuestionerScore:
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class Learnability:
    majority: str
    c: float
    r_learn_raw: float


@dataclass(frozen=True)
class Dependency:
    delta_video: float
    r_dep_raw: float


@dataclass(frozen=True)
class EvidenceScore:
    s_span: float
    s_event: float
    s_temp: float
    r_evid: float


def majority_vote(answers: Sequence[str | None], labels: Sequence[str] = OPTION_LABELS) -> tuple[str, int]:
    """Most frequent non-null answer and its count; ties go to the earlier label."""
    counts = Counter(a for a in answers if a is not None)
    if not counts:
        raise NoValidRolloutsError("no valid rollout answers")
    order = {label: i for i, label in enumerate(labels)}
    label = min(counts, key=lambda a: (-counts[a], order.get(a, len(order)), a))
    return label, counts[label]


def learnability(answers: Sequence[str | None], option_count: int = len(OPTION_LABELS)) -> Learnability:
    """Consistency ``c`` of the with-video majority answer and ``min(c, 1 - c)``.

    ``None`` entries are invalid rollouts: they count toward the denominator but
    never match the majority.
    """
    if not answers:
        raise NoValidRolloutsError("empty rollout list")
    label, count = majority_vote(answers, OPTION_LABELS[:option_count])
    c = count / len(answers)
    return Learnability(label, c, min(c, 1.0 - c))


def video_dependency(
    with_answers: Sequence[str | None], without_answers: Sequence[str | None], a_q: str
) -> Dependency:
    if not with_answers or not without_answers:
        raise NoValidRolloutsError("video dependency needs rollouts in both conditions")
    agree_with = sum(a == a_q for a in with_answers) / len(with_answers)
    agree_without = sum(a == a_q for a in without_answers) / len(without_answers)
    delta = agree_with - agree_without
    return Dependency(delta, max(delta, 0.0))


def evidence_quality(unit: SupervisionUnit, heuristics: EvidenceHeuristics | None = None) -> EvidenceScore:
    h = heuristics or EvidenceHeuristics()
    duration = unit.video.duration_s
    spans = unit.spans
    in_range = all(span.within(duration) for span in spans)
    coverage = merged_coverage(spans)
    s_span = h.component_score if in_range and coverage <= h.coverage_suppression_threshold * duration else 0.0

    descriptions = [ev.description for ev in unit.evidence]
    event_re, temporal_re = h.event_pattern(), h.temporal_pattern()
    s_event = h.component_score if any(event_re.search(d) for d in descriptions) else 0.0
    has_temporal = any(temporal_re.search(d) or _TIMESTAMP_RE.search(d) for d in descriptions)
    s_temp = h.component_score if has_temporal else 0.0

    r_evid = min(max(s_span + s_event + s_temp, h.evid_clip_lo), h.evid_clip_hi)
    return EvidenceScore(s_span, s_event, s_temp, r_evid)


def questioner_reward(
    verdict: FormatVerdict,
    learn: Learnability | None,
    dep: Dependency | None,
    evid: EvidenceScore | None,
    heuristics: EvidenceHeuristics | None = None,
) -> QuestionerScore:
    """Combine components into ``r_Q``.

    Learnability is rescaled from [0, 0.5] to [0, 1] before its weight, so
    the learnability and dependency terms top out at ``w_learn`` and
    ``w_dep``. A failed format verdict scores 0 overall; ``learn``/``dep``
    of ``None`` mean no valid rollouts and contribute nothing.
    """
    h = heuristics or EvidenceHeuristics()
    if not verdict.ok:
        return QuestionerScore.zero()
    r_format = format_reward(verdict, h.format_bonus)
    c = learn.c if learn else 0.0
    r_learn_raw = learn.r_learn_raw if learn else 0.0
    delta = dep.delta_video if dep else 0.0
    r_dep_raw = dep.r_dep_raw if dep else 0.0
    evid = evid or EvidenceScore(0.0, 0.0, 0.0, 0.0)
    easy_penalty = h.easy_penalty_value if learn is not None and c >= h.easy_threshold else 0.0
    total = r_format + h.w_learn * r_learn_raw * 2 + h.w_dep * r_dep_raw + evid.r_evid - easy_penalty
    return QuestionerScore(
        r_format=r_format,
        c=c,
        r_learn_raw=r_learn_raw,
        delta_video=delta,
        r_dep_raw=r_dep_raw,
        s_span=evid.s_span,
        s_event=evid.s_event,
        s_temp=evid.s_temp,
        r_evid=evid.r_evid,
        easy_penalty=easy_penalty,
        r_q_total=total,
    )
