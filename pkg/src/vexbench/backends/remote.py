"""Client for a search service speaking the stub's JSON protocol."""

from __future__ import annotations

import uuid

import numpy as np
import requests

from .. import vectors
from ..errors import BackendConnectionError, NotSealedError, ProtocolError
from ..index import ResultList, SearchHit, canonical_order
from .base import BackendKind, BackendTimings, QueryResult, SearchBackend, stack_records
from .stub import WIRE_SCORE_OFFSET

DEFAULT_BULK_SIZE = 500


class RemoteBackend(SearchBackend):
    kind = BackendKind.REMOTE

    def __init__(
        self,
        endpoint: str,
        index_name: str | None = None,
        bulk_size: int = DEFAULT_BULK_SIZE,
        timeout: float = 120.0,
        clock=None,
    ) -> None:
        super().__init__(clock)
        self.endpoint = endpoint.rstrip("/")
        self.index_name = index_name or f"vexbench-{uuid.uuid4().hex[:12]}"
        self.bulk_size = bulk_size
        self.timeout = timeout
        self._session = requests.Session()
        self._dim: int | None = None
        self._created = False

    def _call(self, method: str, path: str, payload=None) -> dict:
        url = f"{self.endpoint}{path}"
        try:
            resp = self._session.request(method, url, json=payload, timeout=self.timeout)
        except requests.RequestException as exc:
            raise BackendConnectionError(self.endpoint, exc) from exc
        try:
            body = resp.json()
        except ValueError:
            raise ProtocolError(f"non-JSON reply from {url}", resp.status_code) from None
        if resp.status_code != 200:
            msg = body.get("error") if isinstance(body, dict) else None
            raise ProtocolError(msg or resp.reason or "request failed", resp.status_code)
        if not isinstance(body, dict):
            raise ProtocolError(f"unexpected reply from {url}: {body!r}")
        return body

    def index(self, records) -> BackendTimings:
        t0 = self.clock()
        ids, block = stack_records(records)
        dim = block.shape[1] if ids else 1
        path = f"/index/{self.index_name}"
        self._call("PUT", path, {"dim": dim})
        self._created = True
        self._dim = dim
        sent = 0
        for start in range(0, len(ids), self.bulk_size):
            chunk_ids = ids[start : start + self.bulk_size]
            rows = block[start : start + self.bulk_size].tolist()
            docs = [{"id": i, "embedding": row} for i, row in zip(chunk_ids, rows)]
            reply = self._call("POST", f"{path}/bulk", {"docs": docs})
            sent += int(reply.get("indexed", -1))
        if sent != len(ids):
            raise ProtocolError(f"service acknowledged {sent} of {len(ids)} documents")
        return BackendTimings(index_duration=self.clock() - t0)

    def query(self, q, k: int) -> QueryResult:
        if not self._created:
            raise NotSealedError("remote backend has not been indexed")
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        t0 = self.clock()
        q64, _ = vectors.prepare_query(q, self._dim if self._dim else np.asarray(q).shape[-1])
        reply = self._call(
            "POST",
            f"/index/{self.index_name}/search",
            {"embedding": q64.tolist(), "k": int(k)},
        )
        hits = reply.get("hits")
        if not isinstance(hits, list):
            raise ProtocolError("search reply lacks a 'hits' array")
        out = []
        for h in hits:
            try:
                wire = float(h["score"])
                out.append(SearchHit(int(h["id"]), vectors.clamp_unit(wire - WIRE_SCORE_OFFSET)))
            except (KeyError, TypeError, ValueError):
                raise ProtocolError(f"malformed hit {h!r}") from None
        res = ResultList(tuple(canonical_order(out)[:k]), k)
        return QueryResult(res, self.clock() - t0)

    def count(self) -> int:
        return int(self._call("GET", f"/index/{self.index_name}")["count"])

    def close(self) -> None:
        if self._created:
            try:
                self._call("DELETE", f"/index/{self.index_name}")
            except (BackendConnectionError, ProtocolError):
                pass
            self._created = False
        self._session.close()
