"""Persisted iteration state, atomic file writes, and the output-directory lock."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path

from ..errors import LockError, StateError

STATE_FILE = "state.json"
LOCK_FILE = ".lock"


class Phase(str, Enum):
    QUESTIONER_OPT = "questioner-opt"
    DATA_GEN = "data-gen"
    PSEUDO_LABEL = "pseudo-label"
    SOLVER_SCORE = "solver-score"
    BATCH_EMIT = "batch-emit"
    DONE = "done"

    @property
    def next(self) -> Phase:
        order = list(Phase)
        return order[(order.index(self) + 1) % len(order)]


WORK_PHASES = tuple(p for p in Phase if p is not Phase.DONE)


@dataclass
class IterationState:
    """``iteration`` counts completed co-evolution rounds; ``phase`` is the next step to run."""

    iteration: int = 0
    phase: Phase = Phase.QUESTIONER_OPT
    rng_seed: int = 0
    questioner_ref: str | None = None
    solver_ref: str | None = None
    dataset_path: str | None = None

    def __post_init__(self) -> None:
        self.phase = Phase(self.phase)
        if self.iteration < 0:
            raise StateError("iteration must be non-negative")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["phase"] = self.phase.value
        return data

    @classmethod
    def from_dict(cls, data: dict) -> IterationState:
        return cls(**data)


def write_atomic(path: str | Path, text: str) -> None:
    """Write ``text`` to ``path`` via a temp file and rename, so readers never see partial content."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def persist(state: IterationState, output_dir: str | Path) -> Path:
    path = Path(output_dir) / STATE_FILE
    write_atomic(path, json.dumps(state.to_dict(), indent=2, sort_keys=True) + "\n")
    return path


def resume(output_dir: str | Path) -> IterationState | None:
    """Load the persisted state, ``None`` if there is none yet."""
    path = Path(output_dir) / STATE_FILE
    if not path.exists():
        return None
    try:
        return IterationState.from_dict(json.loads(path.read_text(encoding="utf-8")))
    except (ValueError, TypeError, KeyError) as exc:
        raise StateError(f"corrupted state file {path}: {exc}; fix or remove it to start over") from exc


class OutputLock:
    """Exclusive lock on an output directory, held via a pid-stamped lock file."""

    def __init__(self, output_dir: str | Path) -> None:
        self.path = Path(output_dir) / LOCK_FILE
        self.held = False

    def acquire(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        for _ in range(2):
            try:
                fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            except FileExistsError:
                if self._stale():
                    self.path.unlink(missing_ok=True)
                    continue
                raise LockError(f"{self.path.parent} is in use by another engine (lock file {self.path})")
            with os.fdopen(fd, "w") as fh:
                fh.write(str(os.getpid()))
            self.held = True
            return
        raise LockError(f"could not acquire {self.path}")

    def _stale(self) -> bool:
        try:
            pid = int(self.path.read_text().strip())
        except (OSError, ValueError):
            return False
        if pid == os.getpid():
            return False
        try:
            os.kill(pid, 0)
        except ProcessLookupError:
            return True
        except PermissionError:
            return False
        return False

    def release(self) -> None:
        if self.held:
            self.path.unlink(missing_ok=True)
            self.held = False

    def __enter__(self) -> OutputLock:
        self.acquire()
        return self

    def __exit__(self, *exc) -> None:
        self.release()
