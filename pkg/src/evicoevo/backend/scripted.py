"""Deterministic backend replaying responses from a JSON-Lines script.

Each script line is ``{"fingerprint": str, "responses": [str, ...]}``.
Exact fingerprint matches are consumed cyclically by sample index. A record
may instead use a wildcard key, tried in this order:

    role:<role>:video | role:<role>:novideo
    role:<role>

Wildcard responses are picked by hashing the per-sample key, so every
prompt sees its own reproducible draw from the shared pool.
"""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path
from typing import Iterable, Mapping

from ..errors import BackendProtocolError, ConfigError
from .base import Backend, PromptRequest


class ScriptedBackend(Backend):
    def __init__(
        self,
        script: Mapping[str, list[str]],
        max_parallel: int = 4,
        delay_s: float = 0.0,
    ) -> None:
        super().__init__(max_parallel)
        for key, responses in script.items():
            if not responses:
                raise ConfigError(f"script entry {key!r} has no responses")
        self.script = {k: list(v) for k, v in script.items()}
        self.delay_s = delay_s

    @classmethod
    def from_records(cls, records: Iterable[dict], **kwargs) -> ScriptedBackend:
        script: dict[str, list[str]] = {}
        for rec in records:
            script.setdefault(str(rec["fingerprint"]), []).extend(str(r) for r in rec["responses"])
        return cls(script, **kwargs)

    @classmethod
    def from_file(cls, path: str | Path, **kwargs) -> ScriptedBackend:
        records = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise ConfigError(f"{path}:{lineno}: bad script record: {exc}") from exc
        return cls.from_records(records, **kwargs)

    def _complete(self, request: PromptRequest) -> list[str]:
        if self.delay_s:
            time.sleep(self.delay_s)
        fp = request.fingerprint
        exact = self.script.get(fp)
        if exact is not None:
            return [exact[i % len(exact)] for i in range(request.sample_count)]

        role = request.role.value
        condition = "novideo" if request.video is None else "video"
        for key in (f"role:{role}:{condition}", f"role:{role}"):
            pool = self.script.get(key)
            if pool is not None:
                return [pool[_pick(request.sample_key(i), len(pool))] for i in range(request.sample_count)]
        raise BackendProtocolError("no scripted response for request", fp)


def _pick(sample_key: str, size: int) -> int:
    return int(hashlib.sha256(sample_key.encode("ascii")).hexdigest(), 16) % size
