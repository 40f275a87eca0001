from __future__ import annotations

import enum
import time
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from ..errors import ConfigError, DimensionMismatchError, VectorError
from ..index import ResultList

Clock = Callable[[], float]


class BackendKind(str, enum.Enum):
    FLAT = "flat"
    NAIVE = "naive"
    REMOTE = "remote"

    @classmethod
    def parse(cls, value: "str | BackendKind") -> "BackendKind":
        try:
            return cls(value)
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise ConfigError(f"unknown backend {value!r} (expected one of {names})") from None


@dataclass(frozen=True)
class BackendTimings:
    index_duration: float = 0.0
    query_duration: float = 0.0


class QueryResult(NamedTuple):
    results: ResultList
    duration: float


def stack_records(records: Iterable[tuple[int, object]]) -> tuple[list[int], np.ndarray]:
    """Split ``(id, embedding)`` pairs into an id list and a float32 matrix."""
    ids: list[int] = []
    rows: list[np.ndarray] = []
    dim = None
    for doc_id, emb in records:
        v = np.asarray(emb, dtype=np.float32)
        if v.ndim != 1:
            raise VectorError(f"embedding for document {doc_id} is not 1-D")
        if dim is None:
            dim = v.shape[0]
        elif v.shape[0] != dim:
            raise DimensionMismatchError(dim, v.shape[0])
        ids.append(int(doc_id))
        rows.append(v)
    if not rows:
        return ids, np.empty((0, 0), dtype=np.float32)
    return ids, np.stack(rows)


class SearchBackend:
    """Common contract: ``index`` once, then ``query`` any number of times."""

    kind: BackendKind

    def __init__(self, clock: Clock | None = None) -> None:
        self.clock = clock or time.perf_counter

    def index(self, records: Sequence[tuple[int, object]]) -> BackendTimings:
        raise NotImplementedError

    def query(self, q, k: int) -> QueryResult:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc) -> None:
        self.close()
