"""Grounding / grounded-QA metrics and evidence-dependency diagnostics."""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Iterable, Sequence

from .protocol import RolloutResponse
from .timeline import TimeSpan, tiou

logger = logging.getLogger(__name__)

RECALL_THRESHOLDS = (0.3, 0.5, 0.7)
GQA_THRESHOLDS = (0.3, 0.5)


@dataclass(frozen=True)
class EvalRecord:
    question_id: str
    pred: RolloutResponse
    duration_s: float
    gt_answer: str | None = None
    gt_span: TimeSpan | None = None

    def __post_init__(self) -> None:
        if self.gt_answer is None and self.gt_span is None:
            raise ValueError(f"{self.question_id}: needs a ground-truth answer or span")

    @property
    def tiou(self) -> float:
        """Temporal IoU with ground truth; missing spans on either side score 0."""
        if self.pred.span is None or self.gt_span is None:
            return 0.0
        return tiou(self.pred.span, self.gt_span)

    @property
    def answer_correct(self) -> bool:
        return self.pred.valid and self.gt_answer is not None and self.pred.answer == self.gt_answer


def round_half_up(value: float, places: int = 2) -> float:
    quantum = Decimal(1).scaleb(-places)
    return float(Decimal(repr(value)).quantize(quantum, rounding=ROUND_HALF_UP))


def as_percent(value: float) -> float:
    """Fraction to a percentage at table precision (two decimals, half-up)."""
    return round_half_up(value * 100, 2)


def grounding_metrics(records: Sequence[EvalRecord], thresholds: Sequence[float] = RECALL_THRESHOLDS) -> dict:
    if not records:
        raise ValueError("no records to evaluate")
    if any(r.gt_span is None for r in records):
        raise ValueError("grounding metrics need a ground-truth span on every record")
    ious = [r.tiou for r in records]
    out = {"mIoU": sum(ious) / len(ious)}
    for t in thresholds:
        out[f"R@{t}"] = sum(iou >= t for iou in ious) / len(ious)
    return out


def gqa_metrics(records: Sequence[EvalRecord], thresholds: Sequence[float] = GQA_THRESHOLDS) -> dict:
    """Fraction of records with the right answer AND a span reaching each tIoU threshold."""
    if not records:
        raise ValueError("no records to evaluate")
    if any(r.gt_span is None or r.gt_answer is None for r in records):
        raise ValueError("GQA needs both a ground-truth answer and span on every record")
    return {
        f"GQA@{t}": sum(r.answer_correct and r.tiou >= t for r in records) / len(records) for t in thresholds
    }


def answer_accuracy(records: Sequence[EvalRecord]) -> float:
    scored = [r for r in records if r.gt_answer is not None]
    if not scored:
        raise ValueError("no records with a ground-truth answer")
    return sum(r.answer_correct for r in scored) / len(scored)


def dependency_gap(with_acc: float, without_acc: float) -> float:
    return with_acc - without_acc


def _snap(acc: float, n: int | None, scale: float) -> float:
    if n is None:
        return acc
    return round(acc * n / scale) * scale / n


def key_span_metrics(
    acc_full: float,
    acc_key: float,
    acc_mask: float,
    acc_rand: float,
    *,
    n: int | None = None,
    scale: float = 1.0,
) -> dict:
    """Key Necessity (full - mask) and Key Specificity (key - random).

    Accuracies may be fractions (``scale=1``) or percentages (``scale=100``).
    Given the number of evaluated questions ``n``, each accuracy is first
    snapped to the nearest ``k / n``, which recovers exact counts from
    rounded percentages before differencing.
    """
    full, key, mask, rand = (_snap(a, n, scale) for a in (acc_full, acc_key, acc_mask, acc_rand))
    return {"necessity": full - mask, "specificity": key - rand}


# ------------------------------------------------------------ frame conditions


@dataclass(frozen=True)
class FrameConditionPlan:
    full: tuple[float, ...]
    only_key: tuple[float, ...]
    mask_key: tuple[float, ...]
    random: tuple[float, ...]
    key_span: TimeSpan
    random_span: TimeSpan
    random_overlaps_key: bool

    def to_dict(self) -> dict:
        return {
            "full": list(self.full),
            "only_key": list(self.only_key),
            "mask_key": list(self.mask_key),
            "random": list(self.random),
            "key_span": self.key_span.as_list(),
            "random_span": self.random_span.as_list(),
            "random_overlaps_key": self.random_overlaps_key,
        }


def _random_span_start(key: TimeSpan, duration_s: float, rng: random.Random) -> tuple[float, bool]:
    length = key.length
    # feasible non-overlapping starts: [0, key.start - L] and [key.end, duration - L]
    regions = []
    if key.start_s - length >= 0:
        regions.append((0.0, key.start_s - length))
    if duration_s - length >= key.end_s:
        regions.append((key.end_s, duration_s - length))
    total = sum(hi - lo for lo, hi in regions)
    if regions and total > 0:
        u = rng.random() * total
        for lo, hi in regions:
            if u <= hi - lo:
                return lo + u, False
            u -= hi - lo
        lo, hi = regions[-1]
        return hi, False
    if regions:
        # only zero-width feasible regions: pick one of the exact positions
        return rng.choice(regions)[0], False
    return rng.random() * max(duration_s - length, 0.0), True


def frame_condition_plan(
    frames: Sequence[float], key: TimeSpan, duration_s: float, rng: random.Random
) -> FrameConditionPlan:
    """Full / Only-key / Mask-key / Random frame sets for one question.

    Membership is start-inclusive and end-exclusive. The Random span has the
    key span's length and avoids it whenever the timeline leaves room; its
    frame set is the frames nearest that span, exactly as many as Only-key.
    """
    full = tuple(frames)
    only_key = tuple(f for f in full if key.contains(f))
    mask_key = tuple(f for f in full if not key.contains(f))
    if not only_key:
        logger.warning("key span %s contains no sampled frames", key.as_list())

    start, overlaps = _random_span_start(key, duration_s, rng)
    start = min(max(start, 0.0), max(duration_s - key.length, 0.0))
    random_span = TimeSpan(start, start + key.length)
    centre = (random_span.start_s + random_span.end_s) / 2

    def distance(f: float) -> tuple[float, float, float]:
        if random_span.contains(f):
            outside = 0.0
        else:
            outside = max(random_span.start_s - f, f - random_span.end_s, 0.0)
        return (outside, abs(f - centre), f)

    chosen = sorted(sorted(full, key=distance)[: len(only_key)])
    return FrameConditionPlan(
        full=full,
        only_key=only_key,
        mask_key=mask_key,
        random=tuple(chosen),
        key_span=key,
        random_span=random_span,
        random_overlaps_key=overlaps,
    )


# ------------------------------------------------------------------ file I/O


def read_jsonl(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def span_or_none(raw) -> TimeSpan | None:
    if raw is None:
        return None
    try:
        return TimeSpan(float(raw[0]), float(raw[1]))
    except (TypeError, ValueError, IndexError):
        return None


def prediction_from_dict(data: dict) -> RolloutResponse:
    answer = data.get("answer")
    answer = answer if isinstance(answer, str) and answer else None
    return RolloutResponse(
        raw_text=json.dumps(data, ensure_ascii=False),
        answer=answer,
        span=span_or_none(data.get("span")),
        valid=answer is not None,
    )


def load_eval_records(predictions_path: str | Path, ground_truth_path: str | Path) -> list[EvalRecord]:
    """Join predictions to ground truth by question id; absent predictions score as unparsable."""
    preds = {str(p["question_id"]): p for p in read_jsonl(predictions_path)}
    records = []
    for gt in read_jsonl(ground_truth_path):
        qid = str(gt["question_id"])
        pred = prediction_from_dict(preds[qid]) if qid in preds else RolloutResponse("", None, None, False)
        records.append(
            EvalRecord(
                question_id=qid,
                pred=pred,
                duration_s=float(gt["duration_s"]),
                gt_answer=gt.get("answer"),
                gt_span=span_or_none(gt.get("span")),
            )
        )
    return records


def evaluate_records(records: Sequence[EvalRecord]) -> dict:
    """All metrics applicable to the record set, as a flat report."""
    report: dict = {"count": len(records)}
    if any(r.gt_answer is not None for r in records):
        report["accuracy"] = answer_accuracy(records)
    grounded = [r for r in records if r.gt_span is not None]
    if grounded:
        report.update(grounding_metrics(grounded))
    both = [r for r in grounded if r.gt_answer is not None]
    if both:
        report.update(gqa_metrics(both))
    return report


def condition_accuracy(predictions: Iterable[dict], references: dict[str, str]) -> float:
    preds = {str(p["question_id"]): p.get("answer") for p in predictions}
    if not references:
        raise ValueError("no reference answers")
    return sum(preds.get(qid) == ref for qid, ref in references.items()) / len(references)
