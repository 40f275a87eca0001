"""Indexing/querying wall-clock benchmark across backends and corpus sizes.

Every (backend, size) cell runs ``repetitions`` times on a fresh backend
instance and the summary reports the arithmetic mean per phase. The naive
backend has no index phase. A cell that raises is marked ``failed`` and the
remaining cells still run.
"""

from __future__ import annotations

import logging
import os
import statistics
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .backends import BackendKind, Clock, SearchBackend, make_backend
from .dataset import EnrichedRecord
from .errors import ConfigError
from .report import render_csv

log = logging.getLogger(__name__)

DEFAULT_SIZES = (1_000, 5_000, 10_000, 20_000, 40_000, 80_000)

INDEX = "index"
QUERY = "query"

BackendFactory = Callable[[BackendKind, Clock | None], SearchBackend]


@dataclass(frozen=True)
class BenchPlan:
    sizes: tuple[int, ...] = DEFAULT_SIZES
    backends: tuple[BackendKind, ...] = (BackendKind.FLAT, BackendKind.NAIVE)
    k: int = 100
    repetitions: int = 3
    seed: int = 0
    query_row: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        object.__setattr__(self, "backends", tuple(BackendKind.parse(b) for b in self.backends))
        if not self.sizes:
            raise ConfigError("at least one corpus size is required")
        if any(s < 1 for s in self.sizes):
            raise ConfigError("corpus sizes must be positive")
        if any(b <= a for a, b in zip(self.sizes, self.sizes[1:])):
            raise ConfigError(f"sizes must be strictly ascending, got {list(self.sizes)}")
        if not self.backends:
            raise ConfigError("at least one backend is required")
        if len(set(self.backends)) != len(self.backends):
            raise ConfigError("backends must not repeat")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.query_row < 0:
            raise ConfigError("query_row must be >= 0")


@dataclass(frozen=True)
class BenchSample:
    backend: BackendKind
    phase: str
    size: int
    repetition: int
    duration_s: float | None
    status: str = "ok"


@dataclass(frozen=True)
class SummaryRow:
    backend: BackendKind
    phase: str
    size: int
    mean_s: float | None
    status: str = "ok"


@dataclass
class BenchResult:
    samples: list[BenchSample] = field(default_factory=list)
    summary: list[SummaryRow] = field(default_factory=list)
    failures: dict[tuple[BackendKind, int], str] = field(default_factory=dict)

    def mean(self, backend, phase: str, size: int) -> float | None:
        backend = BackendKind.parse(backend)
        for row in self.summary:
            if (row.backend, row.phase, row.size) == (backend, phase, size):
                return row.mean_s
        raise KeyError((backend, phase, size))


def _phases(kind: BackendKind) -> tuple[str, ...]:
    return (QUERY,) if kind is BackendKind.NAIVE else (INDEX, QUERY)


def run_bench(
    plan: BenchPlan,
    records: Sequence[EnrichedRecord],
    factory: BackendFactory | None = None,
    clock: Clock | None = None,
    remote_url: str | None = None,
) -> BenchResult:
    """Run every cell of ``plan`` sequentially against ``records``."""
    need = max(plan.sizes)
    if len(records) < need:
        raise ConfigError(f"corpus has {len(records)} records, plan needs {need}")
    if plan.query_row >= len(records):
        raise ConfigError(f"query row {plan.query_row} is outside the corpus")
    if factory is None:
        def factory(kind, clk):
            return make_backend(kind, clk, remote_url)

    query = records[plan.query_row].question_embeddings
    result = BenchResult()
    for kind in plan.backends:
        for size in plan.sizes:
            docs = [(r.example_id, r.document_embeddings) for r in records[:size]]
            for rep in range(plan.repetitions):
                phase = INDEX
                try:
                    with factory(kind, clock) as backend:
                        timings = backend.index(docs)
                        if kind is not BackendKind.NAIVE:
                            result.samples.append(BenchSample(kind, INDEX, size, rep, timings.index_duration))
                        phase = QUERY
                        _, duration = backend.query(query, plan.k)
                        result.samples.append(BenchSample(kind, QUERY, size, rep, duration))
                except Exception as exc:  # a failing cell must not abort the run
                    if kind is BackendKind.NAIVE:
                        phase = QUERY
                    log.warning("%s backend failed at size %d (%s phase): %s", kind.value, size, phase, exc)
                    result.samples.append(BenchSample(kind, phase, size, rep, None, "failed"))
                    result.failures[(kind, size)] = f"{type(exc).__name__}: {exc}"
                    break
    result.summary = summarize(result.samples, result.failures, plan)
    return result


def summarize(samples, failures, plan: BenchPlan) -> list[SummaryRow]:
    rows = []
    for kind in plan.backends:
        for size in plan.sizes:
            for phase in _phases(kind):
                if (kind, size) in failures:
                    rows.append(SummaryRow(kind, phase, size, None, "failed"))
                    continue
                durations = [
                    s.duration_s for s in samples if (s.backend, s.phase, s.size) == (kind, phase, size)
                ]
                rows.append(SummaryRow(kind, phase, size, statistics.fmean(durations)))
    return rows


RAW_HEADER = ("backend", "phase", "size", "repetition", "duration_s", "status")
SUMMARY_HEADER = ("backend", "phase", "size", "mean_s", "status")


def raw_rows(samples: Sequence[BenchSample]) -> list[tuple]:
    rows = [(s.backend.value, s.phase, s.size, s.repetition, s.duration_s, s.status) for s in samples]
    return sorted(rows, key=lambda r: r[:4])


def summary_rows(summary: Sequence[SummaryRow]) -> list[tuple]:
    rows = [(r.backend.value, r.phase, r.size, r.mean_s, r.status) for r in summary]
    return sorted(rows, key=lambda r: r[:3])


def emit_csv(result: BenchResult, prefix) -> tuple[str, str]:
    """Write ``<prefix>_raw.csv`` and ``<prefix>_summary.csv``; return both paths."""
    if not result.samples:
        raise ConfigError("no benchmark samples to write")
    prefix = os.fspath(prefix)
    raw_path, summary_path = f"{prefix}_raw.csv", f"{prefix}_summary.csv"
    with open(raw_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(render_csv(RAW_HEADER, raw_rows(result.samples)))
    with open(summary_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(render_csv(SUMMARY_HEADER, summary_rows(result.summary)))
    return raw_path, summary_path
