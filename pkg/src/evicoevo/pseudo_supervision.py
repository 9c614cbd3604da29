"""Rollout-consensus pseudo labels, the confidence gate, and dataset assembly."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .errors import ConfigError, NoLabelError, NoValidRolloutsError
from .protocol import Evidence, FormatVerdict, RolloutResponse, SupervisionUnit, unit_payload
from .questioner_rewards import QuestionerScore, majority_vote
from .timeline import TimeSpan, VideoContext, median_consensus

GATE_TOLERANCE = 1e-9


class LabelOrigin(str, Enum):
    CONSENSUS = "consensus"
    QUESTIONER_FALLBACK = "questioner-fallback"
    NONE = "none"


@dataclass(frozen=True)
class PseudoLabel:
    label: str
    support: float
    span: TimeSpan | None
    origin: LabelOrigin

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "support": self.support,
            "span": None if self.span is None else self.span.as_list(),
            "origin": self.origin.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> PseudoLabel:
        span = data.get("span")
        return cls(
            label=data["label"],
            support=float(data["support"]),
            span=None if span is None else TimeSpan(*span),
            origin=LabelOrigin(data["origin"]),
        )


@dataclass(frozen=True)
class CurriculumGate:
    s_min: float = 0.3
    s_max: float = 0.8

    def __post_init__(self) -> None:
        if not 0 <= self.s_min < self.s_max <= 1:
            raise ConfigError(f"gate bounds must satisfy 0 <= s_min < s_max <= 1, got {self.s_min}, {self.s_max}")


def derive_pseudo_label(
    rollouts: Sequence[RolloutResponse], unit: SupervisionUnit, n: int | None = None
) -> PseudoLabel:
    """Majority label over ``n`` rollouts with the median span of its supporters.

    Invalid rollouts stay in the support denominator. When the supporters'
    consensus span is missing or degenerate, the unit's first evidence span
    stands in.
    """
    n = len(rollouts) if n is None else n
    if n != len(rollouts):
        raise ValueError(f"expected {n} rollouts, got {len(rollouts)}")
    try:
        label, count = majority_vote([r.answer if r.valid else None for r in rollouts])
    except NoValidRolloutsError as exc:
        raise NoLabelError(f"unit {unit.unit_id}: every rollout is invalid") from exc

    spans = [r.span for r in rollouts if r.valid and r.answer == label and r.span is not None]
    span = median_consensus(spans)
    if span is not None:
        origin = LabelOrigin.CONSENSUS
    elif unit.evidence:
        span, origin = unit.evidence[0].span, LabelOrigin.QUESTIONER_FALLBACK
    else:
        origin = LabelOrigin.NONE
    return PseudoLabel(label=label, support=count / n, span=span, origin=origin)


def gate(label: PseudoLabel, curriculum: CurriculumGate | None = None) -> bool:
    g = curriculum or CurriculumGate()
    return g.s_min - GATE_TOLERANCE <= label.support <= g.s_max + GATE_TOLERANCE


# ---------------------------------------------------------------- dataset


@dataclass
class Candidate:
    """A generated unit (or its parse failure) together with its Solver evidence."""

    candidate_id: str
    video: VideoContext
    verdict: FormatVerdict
    unit: SupervisionUnit | None = None
    rollouts: Sequence[RolloutResponse] = ()
    score: QuestionerScore | None = None


@dataclass(frozen=True)
class DatasetRecord:
    unit: SupervisionUnit
    pseudo: PseudoLabel
    score: QuestionerScore
    iteration: int

    def to_dict(self) -> dict:
        payload = unit_payload(self.unit)
        return {
            "unit_id": self.unit.unit_id,
            "iter": self.iteration,
            "video": self.unit.video.to_dict(),
            "evidence": payload["evidence"],
            "question": self.unit.question,
            "options": list(self.unit.options),
            "answer_q": self.unit.answer,
            "pseudo": self.pseudo.to_dict(),
            "scores": self.score.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> DatasetRecord:
        video = VideoContext.from_dict(data["video"])
        unit = SupervisionUnit(
            unit_id=data["unit_id"],
            video=video,
            evidence=tuple(
                Evidence(TimeSpan(ev["start"], ev["end"]), ev["description"]) for ev in data["evidence"]
            ),
            question=data["question"],
            options=tuple(data["options"]),
            answer=data["answer_q"],
        )
        return cls(
            unit=unit,
            pseudo=PseudoLabel.from_dict(data["pseudo"]),
            score=QuestionerScore(**data["scores"]),
            iteration=int(data["iter"]),
        )


@dataclass
class DatasetReport:
    generated: int = 0
    retained: int = 0
    dropped_format: int = 0
    dropped_no_label: int = 0
    dropped_gate: int = 0

    @property
    def dropped(self) -> int:
        return self.dropped_format + self.dropped_no_label + self.dropped_gate

    def to_dict(self) -> dict:
        return {
            "generated": self.generated,
            "retained": self.retained,
            "dropped": self.dropped,
            "dropped_format": self.dropped_format,
            "dropped_no_label": self.dropped_no_label,
            "dropped_gate": self.dropped_gate,
        }


@dataclass
class Dataset:
    records: list[DatasetRecord] = field(default_factory=list)
    report: DatasetReport = field(default_factory=DatasetReport)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_dict(), ensure_ascii=False) + "\n" for r in self.records)

    @classmethod
    def from_jsonl(cls, text: str) -> Dataset:
        records = [DatasetRecord.from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]
        return cls(records=records, report=DatasetReport(generated=len(records), retained=len(records)))


def build_dataset(
    candidates: Iterable[Candidate],
    iteration: int,
    curriculum: CurriculumGate | None = None,
    n: int | None = None,
) -> Dataset:
    """Keep well-formed, labelable candidates whose support passes the gate, sorted by unit id."""
    report = DatasetReport()
    records = []
    for cand in candidates:
        report.generated += 1
        if not cand.verdict.ok or cand.unit is None:
            report.dropped_format += 1
            continue
        try:
            label = derive_pseudo_label(cand.rollouts, cand.unit, n)
        except NoLabelError:
            report.dropped_no_label += 1
            continue
        if label.origin is LabelOrigin.NONE:
            report.dropped_no_label += 1
            continue
        if not gate(label, curriculum):
            report.dropped_gate += 1
            continue
        records.append(DatasetRecord(cand.unit, label, cand.score or QuestionerScore.zero(), iteration))
    records.sort(key=lambda r: r.unit.unit_id)
    report.retained = len(records)
    return Dataset(records, report)
