"""Exact cosine search over an in-memory flat index.

Two query paths share one sealed :class:`FlatIndex`:

* :meth:`FlatIndex.search_topk` scans the corpus in blocks and keeps a
  bounded min-heap of the best ``k`` hits (``n log k``).
* :meth:`FlatIndex.brute_force_all` scores every document one pair at a
  time and fully sorts the result (``n log n``). It doubles as the oracle
  for the top-k path.

Both order hits by descending score with ties broken by ascending id.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from . import vectors
from .errors import (
    DimensionMismatchError,
    DuplicateIdError,
    NonFiniteError,
    NotSealedError,
    SealedIndexError,
    VectorError,
    ZeroNormError,
)

# rows scored per einsum call in the top-k scan
BLOCK_ROWS = 256


class SearchHit(NamedTuple):
    id: int
    score: float


@dataclass(frozen=True)
class ResultList:
    hits: tuple[SearchHit, ...]
    k_requested: int

    def __len__(self) -> int:
        return len(self.hits)

    def __iter__(self):
        return iter(self.hits)

    def __getitem__(self, i):
        return self.hits[i]

    @property
    def ids(self) -> list[int]:
        return [h.id for h in self.hits]

    @property
    def scores(self) -> list[float]:
        return [h.score for h in self.hits]

    def prefix(self, k: int) -> "ResultList":
        return ResultList(self.hits[:k], k)


def canonical_order(hits: Iterable[SearchHit]) -> list[SearchHit]:
    """Sort hits by descending score, then ascending id."""
    return sorted(hits, key=lambda h: (-h.score, h.id))


@dataclass
class FlatIndex:
    """Append-only store of embeddings; sealed before it can be queried."""

    dim: int
    _ids: list[int] = field(default_factory=list, repr=False)
    _rows: list[np.ndarray] = field(default_factory=list, repr=False)
    _id_set: set[int] = field(default_factory=set, repr=False)
    sealed: bool = False
    matrix: np.ndarray | None = field(default=None, repr=False)
    norms: np.ndarray | None = field(default=None, repr=False)
    id_array: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise VectorError(f"index dimension must be positive, got {self.dim}")

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def ids(self) -> list[int]:
        return list(self._ids)

    def add(self, doc_id: int, v) -> "FlatIndex":
        if self.sealed:
            raise SealedIndexError("cannot add to a sealed index")
        emb = vectors.as_embedding(v, self.dim)
        doc_id = int(doc_id)
        if doc_id in self._id_set:
            raise DuplicateIdError(doc_id)
        # all-zero is the only way to get a zero norm from finite float32 input
        if not emb.any():
            raise ZeroNormError(f"document {doc_id} has a zero-norm embedding")
        self._id_set.add(doc_id)
        self._ids.append(doc_id)
        self._rows.append(emb[None, :].copy())
        return self

    def add_many(self, doc_ids: Sequence[int], block) -> "FlatIndex":
        """Add a batch of rows in one validation pass.

        Either every row is added or none is.
        """
        if self.sealed:
            raise SealedIndexError("cannot add to a sealed index")
        # private copy: the sealed matrix must not alias caller memory
        block = np.array(block, dtype=np.float32, order="C", copy=True)
        if block.ndim != 2:
            raise VectorError(f"expected a 2-D block, got shape {block.shape}")
        if block.shape[1] != self.dim:
            raise DimensionMismatchError(self.dim, block.shape[1])
        if block.shape[0] != len(doc_ids):
            raise VectorError(f"{len(doc_ids)} ids for {block.shape[0]} rows")
        if not np.isfinite(block).all():
            raise NonFiniteError("embedding contains NaN or infinite values")
        zero = ~block.any(axis=1)
        if zero.any():
            bad = int(doc_ids[int(np.argmax(zero))])
            raise ZeroNormError(f"document {bad} has a zero-norm embedding")
        new_ids = [int(i) for i in doc_ids]
        seen = set()
        for i in new_ids:
            if i in self._id_set or i in seen:
                raise DuplicateIdError(i)
            seen.add(i)
        self._id_set |= seen
        self._ids.extend(new_ids)
        if block.shape[0]:
            self._rows.append(block)
        return self

    def seal(self) -> "FlatIndex":
        """Freeze the corpus and cache one norm per document."""
        if self.sealed:
            return self
        if len(self._rows) == 1:
            self.matrix = self._rows[0]
        elif self._rows:
            self.matrix = np.concatenate(self._rows, axis=0)
        else:
            self.matrix = np.empty((0, self.dim), dtype=np.float32)
        self._rows = []
        self.matrix.setflags(write=False)
        self.norms = vectors.row_norms(self.matrix)
        self.norms.setflags(write=False)
        self.id_array = np.asarray(self._ids, dtype=np.int64)
        self.id_array.setflags(write=False)
        self.sealed = True
        return self

    def _query(self, q) -> tuple[np.ndarray, float]:
        if not self.sealed:
            raise NotSealedError("index must be sealed before querying")
        return vectors.prepare_query(q, self.dim)

    def search_topk(self, q, k: int) -> ResultList:
        """Exact top-``k`` hits by cosine similarity."""
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        q64, qn = self._query(q)
        ids = self.id_array
        # entries are (score, -id): heap[0] is the current worst hit
        heap: list[tuple[float, int]] = []
        for start in range(0, len(ids), BLOCK_ROWS):
            stop = start + BLOCK_ROWS
            scores = vectors.cosine_rows(self.matrix[start:stop], self.norms[start:stop], q64, qn)
            if len(heap) < k:
                cand = range(len(scores))
            else:
                cand = np.flatnonzero(scores >= heap[0][0]).tolist()
            for j in cand:
                item = (float(scores[j]), -int(ids[start + j]))
                if len(heap) < k:
                    heapq.heappush(heap, item)
                elif item > heap[0]:
                    heapq.heapreplace(heap, item)
        heap.sort(reverse=True)
        return ResultList(tuple(SearchHit(-neg_id, s) for s, neg_id in heap), k)

    def brute_force_all(self, q) -> ResultList:
        """Score every document pair-by-pair and return all hits fully sorted."""
        q64, qn = self._query(q)
        n = len(self.id_array)
        scores = np.empty(n, dtype=np.float64)
        matrix, norms = self.matrix, self.norms
        for i in range(n):
            scores[i] = vectors.cosine_one(matrix[i], norms[i], q64, qn)
        order = np.lexsort((self.id_array, -scores))
        hits = tuple(SearchHit(int(self.id_array[i]), float(scores[i])) for i in order)
        return ResultList(hits, n)
