from __future__ import annotations

import math

from ..protocol import OPTION_LABELS, SupervisionUnit
from ..timeline import VideoContext
from .base import PromptRequest, Role

DEFAULT_FPS = 2.0
DEFAULT_MAX_FRAMES = 32


def sample_frames(duration_s: float, fps: float = DEFAULT_FPS, max_frames: int = DEFAULT_MAX_FRAMES) -> list[float]:
    """Timestamps on a ``1/fps`` grid from 0, uniformly index-downsampled to ``max_frames``."""
    if not duration_s > 0:
        raise ValueError(f"duration must be positive, got {duration_s}")
    if not fps > 0:
        raise ValueError(f"fps must be positive, got {fps}")
    if max_frames < 1:
        raise ValueError("max_frames must be >= 1")
    count = math.ceil(duration_s * fps)
    # guard against ceil rounding up on products like 0.1 * 30
    while count > 1 and (count - 1) / fps >= duration_s:
        count -= 1
    if count <= max_frames:
        indices = range(count)
    else:
        indices = [i * count // max_frames for i in range(max_frames)]
    return [i / fps for i in indices]


QUESTIONER_TEMPLATE = """\
You are watching a video that lasts {duration:g} seconds.
First find the temporal evidence: 1 to 4 time spans, each given in seconds with
0 <= start < end <= {duration:g}, and describe what happens inside each span.
Only after the evidence is fixed, write one multiple-choice question that can be
answered only by watching those spans, with exactly four options and the letter
of the correct option.

Reply with a single JSON object and nothing else, keys in this order:
{{"evidence": [{{"start": <seconds>, "end": <seconds>, "description": "<what happens>"}}],
 "question": "<question>",
 "options": ["<option A>", "<option B>", "<option C>", "<option D>"],
 "answer": "<one of A, B, C, D>"}}"""

SOLVER_TEMPLATE = """\
{context}Question: {question}
{options}

Think about the question, then give the letter of your final answer inside
<answer></answer>{span_instruction}."""

_SPAN_INSTRUCTION = (
    " and the time span that supports it as <span>start,end</span> in seconds"
    " (decimal numbers, start < end)"
)


def build_questioner_prompt(
    video: VideoContext,
    *,
    sample_count: int = 1,
    temperature: float = 1.0,
    seed: int = 0,
    fps: float = DEFAULT_FPS,
    max_frames: int = DEFAULT_MAX_FRAMES,
) -> PromptRequest:
    body = QUESTIONER_TEMPLATE.format(duration=video.duration_s)
    return PromptRequest(
        role=Role.QUESTIONER,
        video=video,
        body=body,
        sample_count=sample_count,
        temperature=temperature,
        seed=seed,
        frame_timestamps=tuple(sample_frames(video.duration_s, fps, max_frames)),
    )


def build_solver_prompt(
    unit: SupervisionUnit,
    with_video: bool,
    *,
    sample_count: int = 1,
    temperature: float = 1.0,
    seed: int = 0,
    fps: float = DEFAULT_FPS,
    max_frames: int = DEFAULT_MAX_FRAMES,
) -> PromptRequest:
    options = "\n".join(f"{label}. {text}" for label, text in zip(OPTION_LABELS, unit.options))
    if with_video:
        context = f"The video lasts {unit.video.duration_s:g} seconds.\n"
        span_instruction = _SPAN_INSTRUCTION
    else:
        context = ""
        span_instruction = ""
    body = SOLVER_TEMPLATE.format(
        context=context, question=unit.question, options=options, span_instruction=span_instruction
    )
    return PromptRequest(
        role=Role.SOLVER,
        video=unit.video if with_video else None,
        body=body,
        sample_count=sample_count,
        temperature=temperature,
        seed=seed,
        frame_timestamps=tuple(sample_frames(unit.video.duration_s, fps, max_frames)) if with_video else None,
        unit_id=unit.unit_id,
    )
