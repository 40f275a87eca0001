"""In-process backends: the flat index and the naive full-sort scan."""

from __future__ import annotations

import numpy as np

from .. import vectors
from ..errors import NotSealedError
from ..index import FlatIndex, ResultList
from .base import BackendKind, BackendTimings, QueryResult, SearchBackend, stack_records


def _build_index(ids: list[int], block: np.ndarray) -> FlatIndex:
    idx = FlatIndex(block.shape[1])
    idx.add_many(ids, block)
    return idx.seal()


def _empty_result(q, k: int) -> ResultList:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    vectors.prepare_query(q, np.asarray(q).shape[-1])
    return ResultList((), k)


class FlatBackend(SearchBackend):
    kind = BackendKind.FLAT

    def __init__(self, clock=None) -> None:
        super().__init__(clock)
        self._index: FlatIndex | None = None
        self._indexed = False

    @property
    def size(self) -> int:
        return 0 if self._index is None else len(self._index)

    def index(self, records) -> BackendTimings:
        t0 = self.clock()
        ids, block = stack_records(records)
        idx = _build_index(ids, block) if ids else None
        t1 = self.clock()
        self._index = idx
        self._indexed = True
        return BackendTimings(index_duration=t1 - t0)

    def query(self, q, k: int) -> QueryResult:
        if not self._indexed:
            raise NotSealedError("flat backend has not been indexed")
        t0 = self.clock()
        if self._index is None:
            res = _empty_result(q, k)
        else:
            res = self._index.search_topk(q, k)
        return QueryResult(res, self.clock() - t0)


class NaiveBackend(SearchBackend):
    """Keeps the raw vectors and compares against every one of them per query.

    Indexing only buffers the records in memory, so it is never timed; all
    the work (norms, per-pair scoring, full sort) happens inside ``query``.
    """

    kind = BackendKind.NAIVE

    def __init__(self, clock=None) -> None:
        super().__init__(clock)
        self._ids: list[int] | None = None
        self._block: np.ndarray | None = None

    @property
    def size(self) -> int:
        return 0 if self._ids is None else len(self._ids)

    def index(self, records) -> BackendTimings:
        self._ids, self._block = stack_records(records)
        return BackendTimings(index_duration=0.0)

    def query(self, q, k: int) -> QueryResult:
        if self._ids is None:
            raise NotSealedError("naive backend has no records")
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        t0 = self.clock()
        if not self._ids:
            res = _empty_result(q, k)
        else:
            res = _build_index(self._ids, self._block).brute_force_all(q).prefix(k)
        return QueryResult(res, self.clock() - t0)
