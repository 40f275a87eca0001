"""Search backends sharing one index/query contract: flat, naive and remote."""

from __future__ import annotations

import os

from ..errors import ConfigError
from .base import BackendKind, BackendTimings, Clock, QueryResult, SearchBackend
from .local import FlatBackend, NaiveBackend
from .remote import RemoteBackend
from .stub import StubServer, StubStore, serve

REMOTE_URL_ENV = "VEXBENCH_REMOTE_URL"

__all__ = [
    "BackendKind",
    "BackendTimings",
    "Clock",
    "FlatBackend",
    "NaiveBackend",
    "QueryResult",
    "REMOTE_URL_ENV",
    "RemoteBackend",
    "SearchBackend",
    "StubServer",
    "StubStore",
    "make_backend",
    "serve",
]


def make_backend(kind, clock: Clock | None = None, remote_url: str | None = None) -> SearchBackend:
    """Instantiate a fresh backend of the given kind."""
    kind = BackendKind.parse(kind)
    if kind is BackendKind.FLAT:
        return FlatBackend(clock)
    if kind is BackendKind.NAIVE:
        return NaiveBackend(clock)
    url = remote_url or os.environ.get(REMOTE_URL_ENV)
    if not url:
        raise ConfigError(f"remote backend needs an endpoint (pass a URL or set {REMOTE_URL_ENV})")
    return RemoteBackend(url, clock=clock)
