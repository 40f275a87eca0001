"""Exception types raised across vexbench.

Every error derives from :class:`VexbenchError` so callers (the CLI in
particular) can catch one base class and map subclasses to exit codes.
"""

from __future__ import annotations


class VexbenchError(Exception):
    """Base class for all vexbench errors."""

    exit_code = 1
    stage = "vexbench"


# vector / index errors


class VectorError(VexbenchError, ValueError):
    exit_code = 3
    stage = "vector"


class DimensionMismatchError(VectorError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"dimension mismatch: expected {expected}, got {got}")
        self.expected = expected
        self.got = got


class ZeroNormError(VectorError):
    pass


class NonFiniteError(VectorError):
    pass


class IndexStateError(VexbenchError):
    exit_code = 4
    stage = "index"


class DuplicateIdError(IndexStateError, ValueError):
    def __init__(self, doc_id: int):
        super().__init__(f"duplicate document id {doc_id}")
        self.doc_id = doc_id


class SealedIndexError(IndexStateError):
    """Mutation attempted on a sealed index."""


class NotSealedError(IndexStateError):
    """Query attempted before the index was sealed."""


# backend / wire errors


class BackendError(VexbenchError):
    exit_code = 5
    stage = "backend"


class BackendConnectionError(BackendError, ConnectionError):
    def __init__(self, endpoint: str, reason: object):
        super().__init__(f"cannot reach {endpoint}: {reason}")
        self.endpoint = endpoint


class ProtocolError(BackendError):
    """The search service rejected a request or sent an unusable reply."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message if status is None else f"[{status}] {message}")
        self.message = message
        self.status = status


class StubStartupError(BackendError):
    pass


# dataset errors


class DatasetError(VexbenchError):
    exit_code = 6
    stage = "dataset"


class MalformedLineError(DatasetError):
    def __init__(self, path: str, lineno: int, reason: str):
        super().__init__(f"{path}:{lineno}: malformed line: {reason}")
        self.path = path
        self.lineno = lineno


class ProviderError(DatasetError):
    """Embedding provider failed or returned unusable vectors."""

    def __init__(self, message: str, endpoint: str | None = None, attempts: int = 0):
        super().__init__(message)
        self.endpoint = endpoint
        self.attempts = attempts


# harness errors


class ConfigError(VexbenchError, ValueError):
    exit_code = 7
    stage = "config"


class ArityError(VexbenchError, ValueError):
    exit_code = 8
    stage = "quality"
