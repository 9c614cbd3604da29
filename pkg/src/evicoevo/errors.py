"""Exception hierarchy shared across the engine."""

from __future__ import annotations


class EngineError(Exception):
    """Base class for every error raised by evicoevo."""


class InvalidSpanError(EngineError, ValueError):
    pass


class InvalidVideoError(EngineError, ValueError):
    pass


class NoValidRolloutsError(EngineError):
    """Every Solver rollout for a question was invalid or the list was empty."""


class NoLabelError(EngineError):
    """No pseudo label can be derived because no rollout produced an answer."""


class UnsupervisedSampleError(EngineError):
    """A sample without any temporal supervision reached the Solver reward."""


class BackendError(EngineError):
    def __init__(self, message: str, fingerprint: str | None = None) -> None:
        super().__init__(message if fingerprint is None else f"{message} [fingerprint={fingerprint}]")
        self.fingerprint = fingerprint


class BackendUnreachableError(BackendError):
    pass


class BackendProtocolError(BackendError):
    pass


class ConfigError(EngineError, ValueError):
    pass


class StateError(EngineError):
    pass


class LockError(EngineError):
    pass
