"""Result-quality checks: cross-backend positional agreement and recall@k.

Agreement counts the ranked positions at which the backends do not all
return the same document id. Recall counts the queries whose paired
document shows up in the top-k.
"""

from __future__ import annotations

import logging
import statistics
from dataclasses import dataclass, field
from typing import Sequence

from .backends import BackendKind, Clock, SearchBackend, make_backend
from .dataset import EnrichedRecord
from .errors import ArityError, ConfigError
from .index import ResultList

log = logging.getLogger(__name__)

RECALL_K_VALUES = (50, 100, 500, 1_000)
AGREEMENT_SIZES = (500, 1_000, 5_000, 10_000)


def _ids(result) -> list[int]:
    if isinstance(result, ResultList):
        return result.ids
    return [h.id if hasattr(h, "id") else h for h in result]


def positional_agreement(results: Sequence, k: int | None = None) -> int:
    """Number of positions where the lists disagree on the document id.

    Lists are compared over their shortest common length (capped at ``k``);
    a length mismatch on its own is not an error.
    """
    if len(results) < 2:
        raise ArityError(f"need at least 2 result lists, got {len(results)}")
    lists = [_ids(r) for r in results]
    length = min(len(ids) for ids in lists)
    if k is not None:
        length = min(length, k)
    return sum(1 for i in range(length) if len({ids[i] for ids in lists}) > 1)


@dataclass
class AgreementReport:
    dataset_size: int
    k: int
    runs: int
    errors_per_run: list[int] = field(default_factory=list)
    avg_errors: float | None = None
    max_score_gap: float | None = None
    status: str = "ok"
    error: str | None = None


def _make(factory, kind, clock, remote_url):
    if factory is not None:
        return factory(kind, clock)
    return make_backend(kind, clock, remote_url)


def run_agreement(
    records: Sequence[EnrichedRecord],
    sizes: Sequence[int] = AGREEMENT_SIZES,
    backends: Sequence = (BackendKind.FLAT, BackendKind.NAIVE, BackendKind.REMOTE),
    k: int = 100,
    runs: int = 2,
    query_row: int = 0,
    factory=None,
    clock: Clock | None = None,
    remote_url: str | None = None,
) -> list[AgreementReport]:
    """Index every backend at each size and compare their top-``k`` lists.

    ``max_score_gap`` is the largest score difference, at positions where
    the ids agree, between any backend and the first one.
    """
    kinds = [BackendKind.parse(b) for b in backends]
    if len(kinds) < 2:
        raise ArityError(f"agreement needs at least 2 backends, got {len(kinds)}")
    if runs < 1:
        raise ConfigError("runs must be >= 1")
    if k < 1:
        raise ConfigError("k must be >= 1")
    if max(sizes) > len(records):
        raise ConfigError(f"corpus has {len(records)} records, sizes need {max(sizes)}")
    query = records[query_row].question_embeddings
    reports = []
    for size in sizes:
        docs = [(r.example_id, r.document_embeddings) for r in records[:size]]
        report = AgreementReport(size, k, runs)
        gap = 0.0
        try:
            for _ in range(runs):
                lists = []
                for kind in kinds:
                    backend: SearchBackend = _make(factory, kind, clock, remote_url)
                    with backend:
                        backend.index(docs)
                        lists.append(backend.query(query, k).results)
                report.errors_per_run.append(positional_agreement(lists, k))
                ref = lists[0]
                for other in lists[1:]:
                    for a, b in zip(ref, other):
                        if a.id == b.id:
                            gap = max(gap, abs(a.score - b.score))
        except Exception as exc:
            log.warning("agreement at size %d failed: %s", size, exc)
            report.status = "failed"
            report.error = f"{type(exc).__name__}: {exc}"
        else:
            report.avg_errors = statistics.fmean(report.errors_per_run)
            report.max_score_gap = gap
        reports.append(report)
    return reports


@dataclass
class RecallReport:
    num_queries: int
    k_values: tuple[int, ...]
    hits_at_k: tuple[int, ...]

    def as_dict(self) -> dict[int, int]:
        return dict(zip(self.k_values, self.hits_at_k))


def _check_k_values(k_values: Sequence[int]) -> tuple[int, ...]:
    ks = tuple(int(k) for k in k_values)
    if not ks:
        raise ConfigError("at least one k value is required")
    if ks[0] < 1 or any(b <= a for a, b in zip(ks, ks[1:])):
        raise ConfigError(f"k values must be positive and strictly ascending, got {list(ks)}")
    return ks


def recall_expected(
    records: Sequence[EnrichedRecord],
    n: int = 10_000,
    m: int = 100,
    k_values: Sequence[int] = RECALL_K_VALUES,
    backend=BackendKind.FLAT,
    factory=None,
    remote_url: str | None = None,
) -> RecallReport:
    """Count queries whose own document lands in the top-k of the first ``n`` documents.

    The queries are the question embeddings of the first ``m`` records.
    """
    ks = _check_k_values(k_values)
    if m < 1 or n < 1:
        raise ConfigError("n and m must be positive")
    if m > n:
        raise ConfigError(f"number of queries ({m}) exceeds corpus size ({n})")
    if len(records) < n:
        raise ConfigError(f"corpus has {len(records)} records, recall needs {n}")
    docs = [(r.example_id, r.document_embeddings) for r in records[:n]]
    hits = [0] * len(ks)
    with _make(factory, BackendKind.parse(backend), None, remote_url) as b:
        b.index(docs)
        for rec in records[:m]:
            ranked = b.query(rec.question_embeddings, ks[-1]).results.ids
            try:
                rank = ranked.index(rec.example_id)
            except ValueError:
                continue
            for i, k in enumerate(ks):
                if rank < k:
                    hits[i] += 1
    return RecallReport(m, ks, tuple(hits))
