"""A small HTTP stand-in for an external vector search service.

Routes (JSON bodies)::

    PUT    /index/{name}          {"dim": int}                      -> {"acknowledged": true}
    POST   /index/{name}/bulk     {"docs": [{"id", "embedding"}]}   -> {"indexed": count}
    POST   /index/{name}/search   {"embedding": [...], "k": int}    -> {"hits": [{"id", "score"}]}
    GET    /index/{name}                                            -> {"dim": int, "count": int}
    DELETE /index/{name}                                            -> {"acknowledged": true}

Scores on the wire are ``cosine + 1`` so they are never negative. Failures
answer ``{"error": message}`` with a 4xx status.
"""

from __future__ import annotations

import json
import logging
import re
import threading
from dataclasses import dataclass, field
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from ..errors import StubStartupError, VexbenchError
from ..index import FlatIndex

log = logging.getLogger(__name__)

WIRE_SCORE_OFFSET = 1.0

_ROUTE = re.compile(r"^/index/(?P<name>[A-Za-z0-9_.\-]+)(?:/(?P<action>bulk|search))?/?$")


class RequestError(Exception):
    def __init__(self, status: HTTPStatus, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


def _bad(message: str) -> RequestError:
    return RequestError(HTTPStatus.BAD_REQUEST, message)


@dataclass
class StubIndex:
    dim: int
    ids: set[int] = field(default_factory=set)
    id_blocks: list[list[int]] = field(default_factory=list)
    blocks: list[np.ndarray] = field(default_factory=list)
    _sealed: FlatIndex | None = None

    @property
    def count(self) -> int:
        return len(self.ids)

    def searchable(self) -> FlatIndex:
        if self._sealed is None:
            idx = FlatIndex(self.dim)
            for ids, block in zip(self.id_blocks, self.blocks):
                idx.add_many(ids, block)
            self._sealed = idx.seal()
        return self._sealed


_NUMBER_TYPES = {int, float}


def _parse_vector(raw, dim: int, what: str) -> np.ndarray:
    if not isinstance(raw, list) or not set(map(type, raw)) <= _NUMBER_TYPES:
        raise _bad(f"{what} must be an array of numbers")
    if len(raw) != dim:
        raise _bad(f"{what} has dimension {len(raw)}, index expects {dim}")
    v = np.asarray(raw, dtype=np.float32)
    if not np.isfinite(v).all():
        raise _bad(f"{what} contains non-finite values")
    if not v.any():
        raise _bad(f"{what} has zero norm")
    return v


def _parse_int(raw, what: str) -> int:
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise _bad(f"{what} must be an integer")
    return raw


class StubStore:
    """Thread-safe collection of named indices."""

    def __init__(self) -> None:
        self._lock = threading.RLock()
        self._indices: dict[str, StubIndex] = {}

    def get(self, name: str) -> StubIndex:
        with self._lock:
            try:
                return self._indices[name]
            except KeyError:
                raise RequestError(HTTPStatus.NOT_FOUND, f"unknown index: {name}") from None

    def create(self, name: str, body) -> dict:
        if not isinstance(body, dict) or "dim" not in body:
            raise _bad("body must be an object with a 'dim' field")
        dim = _parse_int(body["dim"], "dim")
        if dim < 1:
            raise _bad("dim must be positive")
        with self._lock:
            if name in self._indices:
                raise _bad(f"index already exists: {name}")
            self._indices[name] = StubIndex(dim)
        return {"acknowledged": True}

    def delete(self, name: str) -> dict:
        with self._lock:
            if self._indices.pop(name, None) is None:
                raise RequestError(HTTPStatus.NOT_FOUND, f"unknown index: {name}")
        return {"acknowledged": True}

    def bulk(self, name: str, body) -> dict:
        if not isinstance(body, dict) or not isinstance(body.get("docs"), list):
            raise _bad("body must be an object with a 'docs' array")
        with self._lock:
            index = self.get(name)
            ids: list[int] = []
            rows: list[np.ndarray] = []
            seen: set[int] = set()
            for n, doc in enumerate(body["docs"]):
                if not isinstance(doc, dict):
                    raise _bad(f"docs[{n}] must be an object")
                doc_id = _parse_int(doc.get("id"), f"docs[{n}].id")
                if doc_id in index.ids or doc_id in seen:
                    raise _bad(f"duplicate document id {doc_id}")
                seen.add(doc_id)
                ids.append(doc_id)
                rows.append(_parse_vector(doc.get("embedding"), index.dim, f"docs[{n}].embedding"))
            if ids:
                index.ids |= seen
                index.id_blocks.append(ids)
                index.blocks.append(np.stack(rows))
                index._sealed = None
        return {"indexed": len(ids)}

    def search(self, name: str, body) -> dict:
        if not isinstance(body, dict):
            raise _bad("body must be an object with 'embedding' and 'k'")
        k = _parse_int(body.get("k"), "k")
        if k < 1:
            raise _bad("k must be >= 1")
        with self._lock:
            index = self.get(name)
            q = _parse_vector(body.get("embedding"), index.dim, "embedding")
            searchable = index.searchable() if index.count else None
        if searchable is None:
            return {"hits": []}
        res = searchable.search_topk(q, k)
        return {"hits": [{"id": h.id, "score": h.score + WIRE_SCORE_OFFSET} for h in res]}


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server: "_StubHTTPServer"

    def log_message(self, format, *args):  # noqa: A002
        log.debug("%s - %s", self.address_string(), format % args)

    def _reply(self, status: int, payload: dict) -> None:
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _body(self):
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        try:
            return json.loads(raw, parse_constant=_reject_constant)
        except (ValueError, UnicodeDecodeError) as exc:
            raise _bad(f"malformed body: {exc}") from None

    def _dispatch(self, method: str) -> None:
        store = self.server.store
        try:
            m = _ROUTE.match(self.path)
            if m is None:
                raise RequestError(HTTPStatus.NOT_FOUND, f"no route for {self.path}")
            name, action = m["name"], m["action"]
            if action is None and method == "PUT":
                out = store.create(name, self._body())
            elif action is None and method == "GET":
                idx = store.get(name)
                out = {"dim": idx.dim, "count": idx.count}
            elif action is None and method == "DELETE":
                out = store.delete(name)
            elif action == "bulk" and method == "POST":
                out = store.bulk(name, self._body())
            elif action == "search" and method == "POST":
                out = store.search(name, self._body())
            else:
                raise RequestError(HTTPStatus.METHOD_NOT_ALLOWED, f"{method} not allowed on {self.path}")
        except RequestError as exc:
            self._reply(exc.status, {"error": exc.message})
        except VexbenchError as exc:
            self._reply(HTTPStatus.BAD_REQUEST, {"error": str(exc)})
        else:
            self._reply(HTTPStatus.OK, out)

    def do_PUT(self):
        self._dispatch("PUT")

    def do_POST(self):
        self._dispatch("POST")

    def do_GET(self):
        self._dispatch("GET")

    def do_DELETE(self):
        self._dispatch("DELETE")


def _reject_constant(name: str):
    raise ValueError(f"non-finite number {name}")


class _StubHTTPServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = False

    def __init__(self, address, store: StubStore):
        super().__init__(address, _Handler)
        self.store = store


class StubServer:
    """Runs the stub on a background thread.

    >>> with StubServer(port=0) as stub:  # doctest: +SKIP
    ...     print(stub.url)
    """

    def __init__(self, host: str = "127.0.0.1", port: int = 9200, store: StubStore | None = None):
        self.store = store or StubStore()
        try:
            self._httpd = _StubHTTPServer((host, port), self.store)
        except OSError as exc:
            raise StubStartupError(f"cannot listen on {host}:{port}: {exc}") from exc
        self.host, self.port = self._httpd.server_address[:2]
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def start(self) -> "StubServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, name="vexbench-stub", daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def stop(self) -> None:
        if self._thread is not None:
            self._httpd.shutdown()
            self._thread.join()
            self._thread = None
        self._httpd.server_close()

    def __enter__(self) -> "StubServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def serve(host: str = "127.0.0.1", port: int = 9200, background: bool = True) -> StubServer:
    """Start a stub server; blocks unless ``background`` is true."""
    stub = StubServer(host, port)
    if background:
        return stub.start()
    log.info("stub listening on %s", stub.url)
    try:
        stub.serve_forever()
    finally:
        stub._httpd.server_close()
    return stub
