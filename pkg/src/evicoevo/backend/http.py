"""OpenAI-compatible chat-completions client."""

from __future__ import annotations

import logging
import os
import time
from typing import Callable

import httpx

from ..errors import BackendProtocolError, BackendUnreachableError
from .base import Backend, PromptRequest

logger = logging.getLogger(__name__)

ENDPOINT_ENV_VAR = "EVICOEVO_BACKEND_URL"


def build_payload(request: PromptRequest, model_name: str) -> dict:
    content: list[dict] = [{"type": "text", "text": request.body}]
    if request.video is not None:
        video_part: dict = {"type": "video_url", "video_url": {"url": request.video.uri}}
        if request.frame_timestamps is not None:
            video_part["frame_timestamps"] = list(request.frame_timestamps)
        content.append(video_part)
    return {
        "model": request.model or model_name,
        "messages": [{"role": "user", "content": content}],
        "n": request.sample_count,
        "temperature": request.temperature,
        "seed": request.seed,
    }


class HttpBackend(Backend):
    """POSTs to ``{endpoint_url}/chat/completions``.

    Transport failures and non-2xx replies are retried with exponential
    backoff, ``retry_limit`` times after the first attempt.
    """

    def __init__(
        self,
        endpoint_url: str,
        model_name: str,
        max_parallel: int = 4,
        retry_limit: int = 3,
        timeout_s: float = 120.0,
        backoff_base_s: float = 1.0,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        super().__init__(max_parallel)
        self.endpoint_url = os.environ.get(ENDPOINT_ENV_VAR) or endpoint_url
        self.model_name = model_name
        self.retry_limit = retry_limit
        self.backoff_base_s = backoff_base_s
        self._sleep = sleep
        self._client = httpx.Client(timeout=timeout_s, transport=transport)

    @property
    def url(self) -> str:
        return self.endpoint_url.rstrip("/") + "/chat/completions"

    def _complete(self, request: PromptRequest) -> list[str]:
        payload = build_payload(request, self.model_name)
        last_error = "no attempt made"
        for attempt in range(self.retry_limit + 1):
            if attempt:
                self._sleep(self.backoff_base_s * 2 ** (attempt - 1))
            try:
                response = self._client.post(self.url, json=payload)
            except httpx.TransportError as exc:
                last_error = f"transport error: {exc}"
                logger.warning("attempt %d to %s failed: %s", attempt + 1, self.url, last_error)
                continue
            if not response.is_success:
                last_error = f"HTTP {response.status_code}"
                logger.warning("attempt %d to %s failed: %s", attempt + 1, self.url, last_error)
                continue
            return _read_choices(response, request)
        raise BackendUnreachableError(
            f"{self.url} unreachable after {self.retry_limit + 1} attempts ({last_error})", request.fingerprint
        )

    def close(self) -> None:
        self._client.close()


def _read_choices(response: httpx.Response, request: PromptRequest) -> list[str]:
    try:
        choices = response.json()["choices"]
        texts = [choice["message"]["content"] for choice in choices]
    except (ValueError, KeyError, TypeError) as exc:
        raise BackendProtocolError(f"malformed chat-completions reply: {exc!r}", request.fingerprint) from exc
    if not all(isinstance(t, str) for t in texts):
        raise BackendProtocolError("non-text message content in reply", request.fingerprint)
    return texts
