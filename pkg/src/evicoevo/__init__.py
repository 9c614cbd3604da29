"""Evidence-centred Questioner/Solver co-evolution engine."""

from .protocol import (
    FormatError,
    FormatVerdict,
    RolloutResponse,
    SupervisionUnit,
    format_reward,
    parse_questioner_output,
    parse_solver_output,
    serialize_unit,
)
from .timeline import TimeSpan, VideoContext, alignment_reward, median_consensus, tiou

__version__ = "0.1.0"

__all__ = [
    "FormatError",
    "FormatVerdict",
    "RolloutResponse",
    "SupervisionUnit",
    "TimeSpan",
    "VideoContext",
    "alignment_reward",
    "format_reward",
    "median_consensus",
    "parse_questioner_output",
    "parse_solver_output",
    "serialize_unit",
    "tiou",
]
