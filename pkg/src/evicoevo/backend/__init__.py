"""Model invocation: request model, prompt builders, scripted and HTTP backends."""

from __future__ import annotations

from .base import Backend, BackendConfig, PromptRequest, Role, RolloutCache
from .http import HttpBackend
from .prompts import build_questioner_prompt, build_solver_prompt, sample_frames
from .scripted import ScriptedBackend


def make_backend(config: BackendConfig) -> Backend:
    config.validate()
    if config.kind == "http":
        return HttpBackend(
            endpoint_url=config.endpoint_url or "",
            model_name=config.model_name,
            max_parallel=config.max_parallel,
            retry_limit=config.retry_limit,
            timeout_s=config.timeout_s,
        )
    return ScriptedBackend.from_file(config.script_path, max_parallel=config.max_parallel)


__all__ = [
    "Backend",
    "BackendConfig",
    "HttpBackend",
    "PromptRequest",
    "Role",
    "RolloutCache",
    "ScriptedBackend",
    "build_questioner_prompt",
    "build_solver_prompt",
    "make_backend",
    "sample_frames",
]
