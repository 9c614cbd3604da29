"""Solver reward, GRPO group advantages, and training-batch files for an external trainer."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

from .errors import UnsupervisedSampleError
from .protocol import RolloutResponse
from .pseudo_supervision import LabelOrigin, PseudoLabel
from .timeline import alignment_reward

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.5
DEFAULT_EPS = 1e-6
QUESTIONER_GROUP_SIZE = 4
SOLVER_GROUP_SIZE = 5
LEARNING_RATE = 1e-6
KL_COEFFICIENT = 0.01


@dataclass(frozen=True)
class SolverScore:
    correct: bool
    r_align: float
    r_s: float
    alpha: float = DEFAULT_ALPHA


def solver_reward(
    pred: RolloutResponse, label: PseudoLabel, duration_s: float, alpha: float = DEFAULT_ALPHA
) -> SolverScore:
    """``1[answer == label] * (1 + alpha * r_align)``; a correct answer without a span gets ``r_align = 0``."""
    if label.origin is LabelOrigin.NONE or label.span is None:
        raise UnsupervisedSampleError("pseudo label carries no temporal target")
    correct = pred.valid and pred.answer == label.label
    r_align = alignment_reward(pred.span, label.span, duration_s) if correct and pred.span is not None else 0.0
    r_s = (1.0 + alpha * r_align) if correct else 0.0
    return SolverScore(correct=correct, r_align=r_align, r_s=r_s, alpha=alpha)


@dataclass(frozen=True)
class AdvantageGroup:
    rewards: tuple[float, ...]
    mean: float
    std: float
    eps: float
    advantages: tuple[float, ...]


def group_advantages(rewards: Sequence[float], eps: float = DEFAULT_EPS) -> AdvantageGroup:
    """Group-normalised advantages ``(r - mean) / (std + eps)`` with the population std."""
    if not rewards:
        raise ValueError("cannot normalise an empty reward group")
    rs = tuple(float(r) for r in rewards)
    mean = math.fsum(rs) / len(rs)
    std = math.sqrt(math.fsum((r - mean) ** 2 for r in rs) / len(rs))
    denom = std + eps
    if denom == 0:
        advantages = tuple(0.0 for _ in rs)
    else:
        advantages = tuple((r - mean) / denom for r in rs)
    return AdvantageGroup(rewards=rs, mean=mean, std=std, eps=eps, advantages=advantages)


# ------------------------------------------------------------------ batches


@dataclass
class TrainingBatchManifest:
    iteration: int
    role: str
    group_size: int
    learning_rate: float = LEARNING_RATE
    kl_coefficient: float = KL_COEFFICIENT
    records: int = 0


@dataclass(frozen=True)
class ScoredRollout:
    text: str
    reward: float
    advantage: float | None = None


@dataclass
class BatchRecord:
    unit_id: str
    prompt: str
    video_uri: str
    rollouts: list[ScoredRollout]
    group_stats: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "unit_id": self.unit_id,
            "prompt": self.prompt,
            "video_uri": self.video_uri,
            "rollouts": [{"text": r.text, "reward": r.reward, "advantage": r.advantage} for r in self.rollouts],
            "group_stats": self.group_stats,
        }

    @classmethod
    def from_dict(cls, data: dict) -> BatchRecord:
        return cls(
            unit_id=data["unit_id"],
            prompt=data["prompt"],
            video_uri=data["video_uri"],
            rollouts=[ScoredRollout(r["text"], r["reward"], r.get("advantage")) for r in data["rollouts"]],
            group_stats=dict(data.get("group_stats", {})),
        )


@dataclass
class TrainingBatch:
    manifest: TrainingBatchManifest
    records: list[BatchRecord]
    skipped: int = 0

    def to_jsonl(self) -> str:
        lines = [json.dumps({"manifest": asdict(self.manifest)}, ensure_ascii=False)]
        lines += [json.dumps(r.to_dict(), ensure_ascii=False) for r in self.records]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> TrainingBatch:
        lines = [line for line in text.splitlines() if line.strip()]
        if not lines:
            raise ValueError("empty batch file")
        manifest = TrainingBatchManifest(**json.loads(lines[0])["manifest"])
        return cls(manifest, [BatchRecord.from_dict(json.loads(line)) for line in lines[1:]])


def emit_training_batch(
    records: Sequence[BatchRecord], manifest: TrainingBatchManifest, eps: float = DEFAULT_EPS
) -> TrainingBatch:
    """Attach group advantages to every complete group and stamp the manifest.

    Records whose rollout count differs from ``manifest.group_size`` are
    skipped and counted. Output is sorted by unit id.
    """
    out = []
    skipped = 0
    for rec in sorted(records, key=lambda r: r.unit_id):
        if len(rec.rollouts) != manifest.group_size:
            skipped += 1
            logger.warning(
                "skipping %s: %d rollouts, expected %d", rec.unit_id, len(rec.rollouts), manifest.group_size
            )
            continue
        group = group_advantages([r.reward for r in rec.rollouts], eps)
        out.append(
            BatchRecord(
                unit_id=rec.unit_id,
                prompt=rec.prompt,
                video_uri=rec.video_uri,
                rollouts=[ScoredRollout(r.text, r.reward, a) for r, a in zip(rec.rollouts, group.advantages)],
                group_stats={"mean": group.mean, "std": group.std, "eps": group.eps},
            )
        )
    manifest = TrainingBatchManifest(**{**asdict(manifest), "records": len(out)})
    return TrainingBatch(manifest, out, skipped)
