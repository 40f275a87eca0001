"""Enriched JSONL datasets, batched embedding enrichment and synthetic corpora.

One enriched line looks like::

    {"document_embeddings": [0.1785295, ...], "document_text": "...",
     "example_id": 5655493461695504401, "question_embeddings": [...],
     "question_text": "..."}

Keys are always written in that (alphabetical) order.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import os
import time
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, Protocol, Sequence

import numpy as np
import requests

from . import vectors
from .errors import DatasetError, MalformedLineError, ProviderError, VectorError

log = logging.getLogger(__name__)

DEFAULT_MAX_SEQ_LEN = 256
DEFAULT_BATCH_SIZE = 64

RECORD_KEYS = (
    "document_embeddings",
    "document_text",
    "example_id",
    "question_embeddings",
    "question_text",
)


@dataclass(eq=False)
class EnrichedRecord:
    example_id: int
    document_text: str
    question_text: str
    document_embeddings: np.ndarray
    question_embeddings: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.document_embeddings.shape[0])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EnrichedRecord):
            return NotImplemented
        return (
            self.example_id == other.example_id
            and self.document_text == other.document_text
            and self.question_text == other.question_text
            and np.array_equal(self.document_embeddings, other.document_embeddings)
            and np.array_equal(self.question_embeddings, other.question_embeddings)
        )


class RawRecord(NamedTuple):
    example_id: int
    document_text: str
    question_text: str


# --- reading / writing ----------------------------------------------------


def _vector_json(v: np.ndarray) -> str:
    # 9 significant digits round-trip any float32 exactly
    return "[" + ",".join(["%.9g"] * v.shape[0]) % tuple(v.tolist()) + "]"


def record_to_line(rec: EnrichedRecord) -> str:
    return (
        '{"document_embeddings": ' + _vector_json(rec.document_embeddings)
        + ', "document_text": ' + json.dumps(rec.document_text, ensure_ascii=False)
        + ', "example_id": ' + str(int(rec.example_id))
        + ', "question_embeddings": ' + _vector_json(rec.question_embeddings)
        + ', "question_text": ' + json.dumps(rec.question_text, ensure_ascii=False)
        + "}"
    )


def _reject_constant(name: str):
    raise ValueError(f"non-finite number {name}")


def parse_record(line: str) -> EnrichedRecord:
    """Parse one enriched line; raises ``ValueError`` on any defect."""
    obj = json.loads(line, parse_constant=_reject_constant)
    if not isinstance(obj, dict):
        raise ValueError("line is not a JSON object")
    missing = [k for k in RECORD_KEYS if k not in obj]
    if missing:
        raise ValueError(f"missing keys: {', '.join(missing)}")
    ex_id = obj["example_id"]
    if isinstance(ex_id, bool) or not isinstance(ex_id, int):
        raise ValueError("example_id must be an integer")
    for key in ("document_text", "question_text"):
        if not isinstance(obj[key], str):
            raise ValueError(f"{key} must be a string")
    embs = []
    for key in ("document_embeddings", "question_embeddings"):
        raw = obj[key]
        if not isinstance(raw, list):
            raise ValueError(f"{key} must be an array")
        try:
            embs.append(vectors.as_embedding(raw))
        except (VectorError, TypeError, ValueError) as exc:
            raise ValueError(f"{key}: {exc}") from None
    if embs[0].shape != embs[1].shape:
        raise ValueError(
            f"document and question embeddings differ in dimension ({embs[0].shape[0]} vs {embs[1].shape[0]})"
        )
    return EnrichedRecord(ex_id, obj["document_text"], obj["question_text"], embs[0], embs[1])


def read_jsonl(path, dim: int | None = None) -> Iterator[EnrichedRecord]:
    """Stream records from an enriched JSONL file in file order.

    Blank lines are ignored. Raises :class:`MalformedLineError` naming the
    line for unparseable input, and :class:`DatasetError` when a record's
    dimension or id conflicts with earlier lines.
    """
    path = os.fspath(path)
    seen: set[int] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = parse_record(line)
            except ValueError as exc:
                raise MalformedLineError(path, lineno, str(exc)) from None
            if dim is None:
                dim = rec.dim
            elif rec.dim != dim:
                raise DatasetError(f"{path}:{lineno}: embedding dimension {rec.dim}, expected {dim}")
            if rec.example_id in seen:
                raise DatasetError(f"{path}:{lineno}: duplicate example_id {rec.example_id}")
            seen.add(rec.example_id)
            yield rec


def write_jsonl(records: Iterable[EnrichedRecord], path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(record_to_line(rec))
            fh.write("\n")
            count += 1
    return count


class RawReader:
    """Iterate ``(example_id, document_text, question_text)`` from raw JSONL.

    Lines that cannot be parsed are skipped and tallied in ``skipped``;
    a long enrichment run should not die on one bad line.
    """

    def __init__(self, path) -> None:
        self.path = os.fspath(path)
        self.skipped = 0

    def __iter__(self) -> Iterator[RawRecord]:
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    ex_id = obj["example_id"]
                    doc, question = obj["document_text"], obj["question_text"]
                    if isinstance(ex_id, bool) or not isinstance(ex_id, int):
                        raise TypeError("example_id is not an integer")
                    if not isinstance(doc, str) or not isinstance(question, str):
                        raise TypeError("text fields must be strings")
                except (ValueError, KeyError, TypeError) as exc:
                    self.skipped += 1
                    log.warning("%s:%d: skipping unparseable line (%s)", self.path, lineno, exc)
                    continue
                yield RawRecord(ex_id, doc, question)
        if self.skipped:
            log.info("%s: skipped %d unparseable lines", self.path, self.skipped)


# --- embedding providers --------------------------------------------------


class EmbeddingProvider(Protocol):
    dim: int

    def encode(self, texts: Sequence[str], max_seq_len: int | None = None) -> np.ndarray: ...


class SyntheticProvider:
    """Deterministic stand-in for a sentence encoder.

    Each text maps to a unit vector seeded by a hash of ``(seed, text)``,
    so identical texts always get identical embeddings.
    """

    def __init__(self, seed: int = 0, dim: int = vectors.DEFAULT_DIM) -> None:
        if dim < 1:
            raise ValueError("dim must be positive")
        self.seed = seed
        self.dim = dim
        self.calls = 0

    def _vector(self, text: str) -> np.ndarray:
        digest = hashlib.blake2b(f"{self.seed}\x00{text}".encode("utf-8"), digest_size=8).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        return vectors.normalize(rng.standard_normal(self.dim))

    def encode(self, texts: Sequence[str], max_seq_len: int | None = None) -> np.ndarray:
        self.calls += 1
        if not texts:
            return np.empty((0, self.dim), dtype=np.float32)
        return np.stack([self._vector(t) for t in texts])


class RemoteProvider:
    """Client for an encoding service: ``POST {endpoint}/encode``.

    Request ``{"texts": [...], "max_seq_len": n}``, reply
    ``{"embeddings": [[...], ...]}``. Transport failures and 5xx replies
    are retried with exponential backoff.
    """

    def __init__(
        self,
        endpoint: str,
        dim: int = vectors.DEFAULT_DIM,
        retries: int = 3,
        backoff: float = 0.5,
        timeout: float = 300.0,
        session: requests.Session | None = None,
    ) -> None:
        if not endpoint.startswith(("http://", "https://")):
            raise ValueError(f"provider endpoint must be an http(s) URL, got {endpoint!r}")
        self.endpoint = endpoint.rstrip("/")
        self.dim = dim
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self.session = session or requests.Session()
        self.calls = 0

    def _post(self, payload: dict) -> dict:
        url = f"{self.endpoint}/encode"
        attempts = self.retries + 1
        last: object = None
        for attempt in range(1, attempts + 1):
            try:
                resp = self.session.post(url, json=payload, timeout=self.timeout)
            except requests.RequestException as exc:
                last = exc
            else:
                if resp.status_code < 500:
                    break
                last = f"HTTP {resp.status_code}"
            if attempt < attempts:
                time.sleep(self.backoff * 2 ** (attempt - 1))
        else:
            raise ProviderError(
                f"embedding provider {self.endpoint} unreachable after {attempts} attempts: {last}",
                endpoint=self.endpoint,
                attempts=attempts,
            )
        if resp.status_code != 200:
            raise ProviderError(
                f"embedding provider {self.endpoint} rejected request: HTTP {resp.status_code} {resp.text[:200]}",
                endpoint=self.endpoint,
                attempts=attempt,
            )
        try:
            return resp.json()
        except ValueError:
            raise ProviderError(f"embedding provider {self.endpoint} sent non-JSON reply", self.endpoint, attempt)

    def encode(self, texts: Sequence[str], max_seq_len: int | None = None) -> np.ndarray:
        self.calls += 1
        reply = self._post({"texts": list(texts), "max_seq_len": max_seq_len or DEFAULT_MAX_SEQ_LEN})
        embs = reply.get("embeddings") if isinstance(reply, dict) else None
        if not isinstance(embs, list):
            raise ProviderError(f"embedding provider {self.endpoint} reply lacks 'embeddings'", self.endpoint)
        try:
            out = np.asarray(embs, dtype=np.float32)
        except (TypeError, ValueError) as exc:
            raise ProviderError(f"embedding provider {self.endpoint} sent ragged embeddings: {exc}", self.endpoint)
        if len(embs) == 0:
            out = out.reshape(0, self.dim)
        return out


def embedding_provider_synthetic(seed: int = 0, dim: int = vectors.DEFAULT_DIM) -> SyntheticProvider:
    return SyntheticProvider(seed, dim)


def embedding_provider_remote(endpoint: str, **kwargs) -> RemoteProvider:
    return RemoteProvider(endpoint, **kwargs)


# --- enrichment -----------------------------------------------------------


@dataclass
class EnrichmentConfig:
    provider: EmbeddingProvider
    batch_size: int = DEFAULT_BATCH_SIZE
    max_seq_len: int = DEFAULT_MAX_SEQ_LEN
    embedding_dim: int = vectors.DEFAULT_DIM

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_seq_len < 1:
            raise ValueError("max_seq_len must be >= 1")
        if self.embedding_dim < 1:
            raise ValueError("embedding_dim must be >= 1")


def truncate_tokens(text: str, max_tokens: int) -> str:
    """Cut ``text`` to its first ``max_tokens`` whitespace-separated tokens."""
    tokens = text.split()
    if len(tokens) <= max_tokens:
        return text
    return " ".join(tokens[:max_tokens])


def batched(items: Iterable, size: int) -> Iterator[list]:
    it = iter(items)
    while batch := list(itertools.islice(it, size)):
        yield batch


def enrich_batches(raw_records: Iterable, config: EnrichmentConfig) -> Iterator[list[EnrichedRecord]]:
    """Embed raw records one batch at a time, yielding each finished batch.

    Documents and questions of a batch travel to the provider in a single
    call. Nothing from a batch is yielded unless the whole batch succeeded.
    """
    for batch in batched(raw_records, config.batch_size):
        batch = [RawRecord(*r) for r in batch]
        texts = [truncate_tokens(r.document_text, config.max_seq_len) for r in batch]
        texts += [truncate_tokens(r.question_text, config.max_seq_len) for r in batch]
        embs = np.asarray(config.provider.encode(texts, config.max_seq_len), dtype=np.float32)
        endpoint = getattr(config.provider, "endpoint", None)
        if embs.ndim != 2 or embs.shape[0] != len(texts):
            raise ProviderError(
                f"provider returned {embs.shape[0] if embs.ndim else 0} embeddings for {len(texts)} texts",
                endpoint,
            )
        if embs.shape[1] != config.embedding_dim:
            raise ProviderError(
                f"provider returned dimension {embs.shape[1]}, expected {config.embedding_dim}", endpoint
            )
        if not np.isfinite(embs).all():
            raise ProviderError("provider returned non-finite embeddings", endpoint)
        n = len(batch)
        yield [
            EnrichedRecord(r.example_id, r.document_text, r.question_text, embs[i].copy(), embs[n + i].copy())
            for i, r in enumerate(batch)
        ]


def enrich(raw_records: Iterable, config: EnrichmentConfig) -> Iterator[EnrichedRecord]:
    """Stream enriched records in input order."""
    for batch in enrich_batches(raw_records, config):
        yield from batch


def _completed_lines(path: str) -> int:
    """Count complete lines in ``path``, dropping a trailing partial line."""
    if not os.path.exists(path):
        return 0
    with open(path, "rb+") as fh:
        data = fh.read()
        end = data.rfind(b"\n") + 1
        if end != len(data):
            fh.truncate(end)
    return data[:end].count(b"\n")


def enrich_file(in_path, out_path, config: EnrichmentConfig, resume: bool = True) -> tuple[int, int]:
    """Enrich a raw JSONL file into ``out_path``, flushing after every batch.

    With ``resume`` an existing output is kept and enrichment restarts after
    its last complete line. Returns ``(records written this run, raw lines
    skipped)``.
    """
    out_path = os.fspath(out_path)
    done = _completed_lines(out_path) if resume else 0
    reader = RawReader(in_path)
    source = itertools.islice(iter(reader), done, None)
    if done:
        log.info("resuming %s after %d records", out_path, done)
    written = 0
    with open(out_path, "a" if resume else "w", encoding="utf-8", newline="\n") as fh:
        for batch in enrich_batches(source, config):
            fh.write("".join(record_to_line(r) + "\n" for r in batch))
            fh.flush()
            written += len(batch)
    return written, reader.skipped


# --- synthetic corpora ----------------------------------------------------


def synth_corpus(n: int, dim: int = vectors.DEFAULT_DIM, seed: int = 0, noise: float = 0.0) -> Iterator[EnrichedRecord]:
    """Generate ``n`` records whose question is a noisy copy of its document.

    Document vectors are seeded Gaussian draws normalised to unit length; the
    question is ``normalize(doc + noise * g)`` with fresh Gaussian ``g``. The
    first ``m`` records do not depend on ``n``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if not 0.0 <= noise <= 1.0:
        raise ValueError("noise must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    for i in range(n):
        doc = vectors.normalize(rng.standard_normal(dim))
        g = rng.standard_normal(dim)
        if noise == 0.0:
            question = doc.copy()
        else:
            question = vectors.normalize(doc.astype(np.float64) + noise * g)
        yield EnrichedRecord(i, f"synthetic document {i}", f"synthetic question {i}", doc, question)
