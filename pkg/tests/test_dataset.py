import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from vexbench import dataset
from vexbench.dataset import (
    EnrichedRecord,
    EnrichmentConfig,
    RemoteProvider,
    SyntheticProvider,
    enrich,
    enrich_file,
    read_jsonl,
    synth_corpus,
    truncate_tokens,
    write_jsonl,
)
from vexbench.errors import DatasetError, MalformedLineError, ProviderError, ZeroNormError
from vexbench.index import FlatIndex
from vexbench.vectors import cosine

EXAMPLE_RECORD = Path(__file__).parent / "data" / "example_record.jsonl"
EXAMPLE_ID = 5655493461695504401


def test_example_record_parses():
    (rec,) = list(read_jsonl(EXAMPLE_RECORD))
    assert rec.example_id == EXAMPLE_ID
    assert rec.question_text == "which is the most common use of opt-in e-mail marketing"
    assert rec.document_text.startswith("Email marketing - Wikipedia")
    assert rec.document_embeddings[0] == np.float32(0.178529500961)
    assert rec.question_embeddings[0] == np.float32(-0.051026359897)


def test_example_record_round_trips(tmp_path):
    (rec,) = list(read_jsonl(EXAMPLE_RECORD))
    out = tmp_path / "out.jsonl"
    assert write_jsonl([rec], out) == 1
    line = out.read_text(encoding="utf-8")
    assert list(json.loads(line)) == list(dataset.RECORD_KEYS)
    assert json.loads(line)["example_id"] == EXAMPLE_ID
    assert list(read_jsonl(out)) == [rec]


def test_empty_file(tmp_path):
    p = tmp_path / "empty.jsonl"
    p.write_text("")
    assert list(read_jsonl(p)) == []
    assert write_jsonl([], tmp_path / "zero.jsonl") == 0
    assert (tmp_path / "zero.jsonl").read_text() == ""


def test_truncated_array_names_line(tmp_path):
    good = EXAMPLE_RECORD.read_text().strip()
    p = tmp_path / "bad.jsonl"
    p.write_text(good + "\n" + '{"document_embeddings": [0.1, 0.2\n')
    it = read_jsonl(p)
    next(it)
    with pytest.raises(MalformedLineError) as err:
        next(it)
    assert err.value.lineno == 2
    assert ":2:" in str(err.value)


@pytest.mark.parametrize(
    "mutate",
    [
        lambda o: o.pop("question_text"),
        lambda o: o.update(example_id="5"),
        lambda o: o.update(document_embeddings=[1.0, 2.0]),
        lambda o: o.update(question_embeddings=[]),
    ],
)
def test_invalid_records_rejected(tmp_path, mutate):
    obj = json.loads(EXAMPLE_RECORD.read_text())
    mutate(obj)
    p = tmp_path / "x.jsonl"
    p.write_text(json.dumps(obj) + "\n")
    with pytest.raises(MalformedLineError):
        list(read_jsonl(p))


def test_dimension_inconsistency_across_lines(tmp_path):
    recs = list(synth_corpus(2, 4, seed=0)) + [
        EnrichedRecord(9, "d", "q", np.ones(3, np.float32), np.ones(3, np.float32))
    ]
    p = tmp_path / "dims.jsonl"
    write_jsonl(recs, p)
    with pytest.raises(DatasetError, match="dimension"):
        list(read_jsonl(p))


def test_duplicate_example_id(tmp_path):
    rec = next(synth_corpus(1, 4, seed=0))
    p = tmp_path / "dup.jsonl"
    write_jsonl([rec, rec], p)
    with pytest.raises(DatasetError, match="duplicate"):
        list(read_jsonl(p))


def test_round_trip_100_synthetic(tmp_path):
    recs = list(synth_corpus(100, 32, seed=3, noise=0.3))
    p = tmp_path / "rt.jsonl"
    write_jsonl(recs, p)
    assert list(read_jsonl(p)) == recs


def test_reader_is_lazy(tmp_path):
    p = tmp_path / "lazy.jsonl"
    write_jsonl(synth_corpus(3, 4, seed=1), p)
    with open(p, "a") as fh:
        fh.write("garbage\n")
    it = read_jsonl(p)
    assert [next(it).example_id for _ in range(3)] == [0, 1, 2]
    with pytest.raises(MalformedLineError):
        next(it)


f32 = st.floats(width=32, allow_nan=False, allow_infinity=False)


@st.composite
def record_sets(draw):
    dim = draw(st.integers(1, 8))
    n = draw(st.integers(0, 6))
    ids = draw(st.lists(st.integers(-(2**63), 2**63 - 1), min_size=n, max_size=n, unique=True))
    vec = st.lists(f32, min_size=dim, max_size=dim).map(lambda v: np.asarray(v, np.float32))
    return [
        EnrichedRecord(i, draw(st.text()), draw(st.text()), draw(vec), draw(vec))
        for i in ids
    ]


@given(record_sets())
@settings(max_examples=100, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
def test_round_trip_property(tmp_path, recs):
    p = tmp_path / "prop.jsonl"
    write_jsonl(recs, p)
    assert list(read_jsonl(p)) == recs


# --- synthetic corpus --------------------------------------------------------


def test_synth_noise_zero_plants_identical_question():
    for rec in synth_corpus(20, 16, seed=2, noise=0.0):
        assert np.array_equal(rec.question_embeddings, rec.document_embeddings)
        assert cosine(rec.question_embeddings, rec.document_embeddings) == pytest.approx(1.0, abs=1e-6)


def test_synth_is_deterministic_and_prefix_stable():
    a = list(synth_corpus(50, 8, seed=9, noise=0.5))
    b = list(synth_corpus(50, 8, seed=9, noise=0.5))
    assert a == b
    assert list(synth_corpus(10, 8, seed=9, noise=0.5)) == a[:10]
    assert list(synth_corpus(10, 8, seed=10, noise=0.5)) != a[:10]


def test_synth_unit_norm():
    for rec in synth_corpus(200, 768, seed=1, noise=0.7):
        for v in (rec.document_embeddings, rec.question_embeddings):
            assert abs(np.linalg.norm(v.astype(np.float64)) - 1.0) <= 1e-6


def test_synth_validation():
    with pytest.raises(ValueError):
        list(synth_corpus(0))
    with pytest.raises(ValueError):
        list(synth_corpus(3, noise=1.5))


@pytest.mark.slow
def test_synth_planted_rank_fixture():
    # frozen from an exhaustive float64 numpy scan (seed 7, noise 0.4)
    recs = list(synth_corpus(10_000, 768, seed=7, noise=0.4))
    idx = FlatIndex(768).add_many([r.example_id for r in recs], np.stack([r.document_embeddings for r in recs]))
    idx.seal()
    in_top_1000 = sum(r.example_id in idx.search_topk(r.question_embeddings, 1_000).ids for r in recs[:100])
    assert in_top_1000 == 89


# --- providers and enrichment ------------------------------------------------


def raw(n):
    return [(i, f"document number {i} " + "word " * i, f"question {i}") for i in range(n)]


class CountingProvider(SyntheticProvider):
    def __init__(self, *a, **kw):
        super().__init__(*a, **kw)
        self.batches = []

    def encode(self, texts, max_seq_len=None):
        self.batches.append(list(texts))
        return super().encode(texts, max_seq_len)


def test_synthetic_provider():
    p = SyntheticProvider(seed=1, dim=12)
    a, b, c = p.encode(["x", "y", "x"])
    assert np.array_equal(a, c) and not np.array_equal(a, b)
    assert p.encode(["a", "b", "c"]).shape == (3, 12)
    assert not np.array_equal(SyntheticProvider(seed=2, dim=12).encode(["x"])[0], a)


def test_enrich_batches_provider_calls():
    provider = CountingProvider(dim=8)
    out = list(enrich(raw(10), EnrichmentConfig(provider, batch_size=4, embedding_dim=8)))
    assert [len(b) for b in provider.batches] == [8, 8, 4]
    assert [r.example_id for r in out] == list(range(10))


def test_enrich_is_deterministic():
    cfg = lambda: EnrichmentConfig(SyntheticProvider(seed=5, dim=8), batch_size=3, embedding_dim=8)  # noqa: E731
    assert list(enrich(raw(7), cfg())) == list(enrich(raw(7), cfg()))


def test_enrich_truncates_whitespace_tokens():
    provider = CountingProvider(dim=4)
    long_doc = " ".join(f"t{i}" for i in range(20))
    list(enrich([(1, long_doc, "short q")], EnrichmentConfig(provider, 1, max_seq_len=5, embedding_dim=4)))
    assert provider.batches[0] == ["t0 t1 t2 t3 t4", "short q"]
    assert truncate_tokens("a  b\tc", 5) == "a  b\tc"


def test_enrich_keeps_original_text():
    (rec,) = enrich([(1, "a b c d", "q")], EnrichmentConfig(SyntheticProvider(dim=4), 1, 2, 4))
    assert rec.document_text == "a b c d"


def test_enrich_rejects_wrong_dimension():
    with pytest.raises(ProviderError, match="dimension"):
        list(enrich(raw(2), EnrichmentConfig(SyntheticProvider(dim=8), 2, embedding_dim=16)))


def test_enrich_streaming_memory_bound():
    batch = 5
    pulled = 0
    peak = 0

    def source():
        nonlocal pulled
        for r in raw(37):
            pulled += 1
            yield r

    emitted = 0
    for _ in enrich(source(), EnrichmentConfig(SyntheticProvider(dim=4), batch, embedding_dim=4)):
        emitted += 1
        peak = max(peak, pulled - emitted)
    assert emitted == 37
    assert peak <= 2 * batch


class _EncodeHandler(BaseHTTPRequestHandler):
    mode = "zeros"

    def log_message(self, *a):
        pass

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        self.server.requests.append(body)
        if self.server.mode == "error":
            self.send_response(503)
            self.send_header("Content-Length", "0")
            self.end_headers()
            return
        payload = json.dumps({"embeddings": [[0.0] * 4 for _ in body["texts"]]}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)


@pytest.fixture
def encoder():
    def start(mode):
        srv = ThreadingHTTPServer(("127.0.0.1", 0), _EncodeHandler)
        srv.mode = mode
        srv.requests = []
        threading.Thread(target=srv.serve_forever, daemon=True).start()
        servers.append(srv)
        return srv, f"http://127.0.0.1:{srv.server_address[1]}"

    servers = []
    yield start
    for s in servers:
        s.shutdown()
        s.server_close()


def test_remote_provider_zeros_rejected_at_index_time(encoder):
    srv, url = encoder("zeros")
    provider = RemoteProvider(url, dim=4)
    recs = list(enrich(raw(3), EnrichmentConfig(provider, batch_size=2, max_seq_len=7, embedding_dim=4)))
    assert len(recs) == 3
    assert srv.requests[0]["max_seq_len"] == 7 and len(srv.requests[0]["texts"]) == 4
    with pytest.raises(ZeroNormError):
        FlatIndex(4).add(recs[0].example_id, recs[0].document_embeddings)


def test_remote_provider_retries_then_fails(encoder):
    srv, url = encoder("error")
    provider = RemoteProvider(url, dim=4, retries=2, backoff=0.0)
    out = []
    with pytest.raises(ProviderError) as err:
        for rec in enrich(raw(3), EnrichmentConfig(provider, batch_size=3, embedding_dim=4)):
            out.append(rec)
    assert out == []
    assert url in str(err.value)
    assert err.value.attempts == 3 and len(srv.requests) == 3


def test_remote_provider_down_names_endpoint():
    url = "http://127.0.0.1:9"
    provider = RemoteProvider(url, dim=4, retries=1, backoff=0.0, timeout=2)
    with pytest.raises(ProviderError) as err:
        list(enrich(raw(2), EnrichmentConfig(provider, batch_size=2, embedding_dim=4)))
    assert err.value.endpoint == url and url in str(err.value)


def _write_raw(path, n, bad_lines=()):
    with open(path, "w") as fh:
        for i in range(n):
            if i in bad_lines:
                fh.write("{broken\n")
            fh.write(json.dumps({"example_id": i, "document_text": f"doc {i}", "question_text": f"q {i}",
                                 "annotations": [], "document_url": "u"}) + "\n")


def test_enrich_file_skips_bad_lines(tmp_path):
    src, out = tmp_path / "raw.jsonl", tmp_path / "out.jsonl"
    _write_raw(src, 6, bad_lines={2, 4})
    written, skipped = enrich_file(src, out, EnrichmentConfig(SyntheticProvider(dim=4), 4, embedding_dim=4))
    assert (written, skipped) == (6, 2)
    assert [r.example_id for r in read_jsonl(out)] == list(range(6))


def test_enrich_file_resumes_at_batch_granularity(tmp_path):
    src, out, ref = tmp_path / "raw.jsonl", tmp_path / "out.jsonl", tmp_path / "ref.jsonl"
    _write_raw(src, 10)

    class Crashing(SyntheticProvider):
        def encode(self, texts, max_seq_len=None):
            if self.calls == 2:
                raise ProviderError("boom")
            return super().encode(texts, max_seq_len)

    cfg = EnrichmentConfig(Crashing(dim=4), batch_size=3, embedding_dim=4)
    with pytest.raises(ProviderError):
        enrich_file(src, out, cfg)
    assert len(out.read_text().splitlines()) == 6
    with open(out, "a") as fh:
        fh.write('{"document_embeddings": [0.1')  # torn write
    written, _ = enrich_file(src, out, EnrichmentConfig(SyntheticProvider(dim=4), 3, embedding_dim=4))
    assert written == 4
    enrich_file(src, ref, EnrichmentConfig(SyntheticProvider(dim=4), 3, embedding_dim=4), resume=False)
    assert out.read_text() == ref.read_text()


def test_config_validation():
    with pytest.raises(ValueError):
        EnrichmentConfig(SyntheticProvider(), batch_size=0)
    with pytest.raises(ValueError):
        EnrichmentConfig(SyntheticProvider(), max_seq_len=0)
    with pytest.raises(ValueError):
        RemoteProvider("localhost:8000")
