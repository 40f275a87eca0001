"""Exact cosine top-k search plus a benchmark and quality harness.

Three search approaches share one contract: a flat index with bounded
top-k selection, a naive scan-and-sort, and a remote JSON search service
(with an in-repo stub). The harness times them across corpus sizes and
checks that they rank documents identically.
"""

from .backends import BackendKind, FlatBackend, NaiveBackend, RemoteBackend, StubServer, make_backend
from .dataset import EnrichedRecord, read_jsonl, synth_corpus, write_jsonl
from .index import FlatIndex, ResultList, SearchHit
from .vectors import cosine, count_cosine_calls, dot, norm

__version__ = "0.1.0"

__all__ = [
    "BackendKind",
    "EnrichedRecord",
    "FlatBackend",
    "FlatIndex",
    "NaiveBackend",
    "RemoteBackend",
    "ResultList",
    "SearchHit",
    "StubServer",
    "cosine",
    "count_cosine_calls",
    "dot",
    "make_backend",
    "norm",
    "read_jsonl",
    "synth_corpus",
    "write_jsonl",
]
