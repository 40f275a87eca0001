"""``vexbench`` command line: generate, enrich, query, bench, agree, recall, stub."""

from __future__ import annotations

import argparse
import contextlib
import itertools
import logging
import os
import sys
from typing import Iterator, Sequence

from . import bench, dataset, quality
from .backends import REMOTE_URL_ENV, BackendKind, StubServer, make_backend
from .errors import ConfigError, VexbenchError
from .report import render
from .vectors import DEFAULT_DIM

log = logging.getLogger("vexbench")

EXIT_USAGE = 2
EXIT_IO = 9
EXIT_INTERNAL = 10


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v.replace("_", "")) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return values


def _backend_list(text: str) -> list[BackendKind]:
    try:
        return [BackendKind.parse(v.strip()) for v in text.split(",") if v.strip()]
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _unit_interval(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"expected a value in [0, 1], got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=7, help="RNG seed for synthetic data (default 7)")
    common.add_argument("--dim", type=_positive, default=DEFAULT_DIM, help="embedding dimension (default 768)")
    common.add_argument("--format", choices=("csv", "table"), default="table", help="stdout format")
    common.add_argument("--remote-url", default=os.environ.get(REMOTE_URL_ENV),
                        help=f"search service endpoint (default ${REMOTE_URL_ENV}; "
                             "an in-process stub is started when unset)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="vexbench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("gen", parents=[common], help="write a synthetic enriched corpus")
    p.add_argument("--n", type=_positive, default=10_000)
    p.add_argument("--noise", type=_unit_interval, default=0.0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("enrich", parents=[common], help="embed a raw JSONL corpus")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--batch-size", type=_positive, default=dataset.DEFAULT_BATCH_SIZE)
    p.add_argument("--max-seq-len", type=_positive, default=dataset.DEFAULT_MAX_SEQ_LEN)
    p.add_argument("--provider", default=None,
                   help=f"'synthetic' or an encoder URL (default ${REMOTE_URL_ENV}, else synthetic)")
    p.add_argument("--retries", type=int, default=3)
    p.add_argument("--no-resume", dest="resume", action="store_false")

    p = sub.add_parser("query", parents=[common], help="run one query against a backend")
    p.add_argument("--data", required=True)
    p.add_argument("--backend", type=BackendKind.parse, default=BackendKind.FLAT)
    p.add_argument("--row", type=int, default=0, help="row whose question embedding is the query")
    p.add_argument("--k", type=_positive, default=100)

    p = sub.add_parser("bench", parents=[common], help="time indexing and querying")
    p.add_argument("--data", help="enriched JSONL (synthetic corpus when omitted)")
    p.add_argument("--sizes", type=_int_list, default=list(bench.DEFAULT_SIZES))
    p.add_argument("--backends", type=_backend_list, default=[BackendKind.FLAT, BackendKind.NAIVE])
    p.add_argument("--k", type=_positive, default=100)
    p.add_argument("--reps", type=_positive, default=3)
    p.add_argument("--row", type=int, default=0)
    p.add_argument("--out-prefix", default="bench")

    p = sub.add_parser("agree", parents=[common], help="positional top-k agreement across backends")
    p.add_argument("--data")
    p.add_argument("--sizes", type=_int_list, default=list(quality.AGREEMENT_SIZES))
    p.add_argument("--backends", type=_backend_list,
                   default=[BackendKind.FLAT, BackendKind.NAIVE, BackendKind.REMOTE])
    p.add_argument("--k", type=_positive, default=100)
    p.add_argument("--runs", type=_positive, default=2)
    p.add_argument("--row", type=int, default=0)

    p = sub.add_parser("recall", parents=[common], help="expected-document recall@k")
    p.add_argument("--data")
    p.add_argument("--n", type=_positive, default=10_000)
    p.add_argument("--m", type=_positive, default=100)
    p.add_argument("--k-values", type=_int_list, default=list(quality.RECALL_K_VALUES))
    p.add_argument("--noise", type=_unit_interval, default=0.4, help="planted-query noise for synthetic data")
    p.add_argument("--backend", type=BackendKind.parse, default=BackendKind.FLAT)

    p = sub.add_parser("stub", parents=[common], help="serve the search-service protocol stub")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=9200)
    return parser


def _load(args, count: int, noise: float = 0.0) -> list[dataset.EnrichedRecord]:
    if args.data:
        records = list(itertools.islice(dataset.read_jsonl(args.data), count))
        if len(records) < count:
            raise ConfigError(f"{args.data} has {len(records)} records, need {count}")
        return records
    return list(dataset.synth_corpus(count, args.dim, args.seed, noise))


@contextlib.contextmanager
def _remote_endpoint(args, kinds: Sequence[BackendKind]) -> Iterator[str | None]:
    """Yield the remote endpoint, starting a private stub when none is configured."""
    if BackendKind.REMOTE not in kinds or args.remote_url:
        yield args.remote_url
        return
    with StubServer(port=0) as stub:
        log.info("no %s set; using in-process stub at %s", REMOTE_URL_ENV, stub.url)
        yield stub.url


def cmd_gen(args) -> int:
    n = dataset.write_jsonl(dataset.synth_corpus(args.n, args.dim, args.seed, args.noise), args.out)
    print(f"wrote {n} records to {args.out}", file=sys.stderr)
    return 0


def cmd_enrich(args) -> int:
    provider_spec = args.provider or os.environ.get(REMOTE_URL_ENV) or "synthetic"
    if provider_spec == "synthetic":
        provider = dataset.embedding_provider_synthetic(args.seed, args.dim)
    else:
        provider = dataset.embedding_provider_remote(provider_spec, dim=args.dim, retries=args.retries)
    config = dataset.EnrichmentConfig(provider, args.batch_size, args.max_seq_len, args.dim)
    written, skipped = dataset.enrich_file(args.in_path, args.out, config, resume=args.resume)
    print(f"wrote {written} records to {args.out} ({skipped} raw lines skipped)", file=sys.stderr)
    return 0


def cmd_query(args) -> int:
    records = list(dataset.read_jsonl(args.data))
    if not 0 <= args.row < len(records):
        raise ConfigError(f"row {args.row} is outside the dataset ({len(records)} records)")
    with _remote_endpoint(args, [args.backend]) as url:
        with make_backend(args.backend, remote_url=url) as backend:
            backend.index([(r.example_id, r.document_embeddings) for r in records])
            res = backend.query(records[args.row].question_embeddings, args.k).results
    rows = [(rank, h.id, h.score) for rank, h in enumerate(res, start=1)]
    sys.stdout.write(render(("rank", "id", "score"), rows, args.format))
    return 0


def cmd_bench(args) -> int:
    plan = bench.BenchPlan(args.sizes, args.backends, args.k, args.reps, args.seed, args.row)
    records = _load(args, max(plan.sizes))
    with _remote_endpoint(args, plan.backends) as url:
        result = bench.run_bench(plan, records, remote_url=url)
    raw_path, summary_path = bench.emit_csv(result, args.out_prefix)
    sys.stdout.write(render(bench.SUMMARY_HEADER, bench.summary_rows(result.summary), args.format))
    print(f"wrote {raw_path} and {summary_path}", file=sys.stderr)
    return 0


def cmd_agree(args) -> int:
    records = _load(args, max(args.sizes))
    with _remote_endpoint(args, args.backends) as url:
        reports = quality.run_agreement(
            records, args.sizes, args.backends, args.k, args.runs, args.row, remote_url=url
        )
    rows = [(r.dataset_size, r.k, r.runs, r.avg_errors, r.status) for r in reports]
    sys.stdout.write(render(("size", "k", "runs", "avg_errors", "status"), rows, args.format))
    return 0


def cmd_recall(args) -> int:
    records = _load(args, args.n, args.noise)
    with _remote_endpoint(args, [args.backend]) as url:
        report = quality.recall_expected(records, args.n, args.m, args.k_values, args.backend, remote_url=url)
    rows = [(k, hits, report.num_queries) for k, hits in zip(report.k_values, report.hits_at_k)]
    sys.stdout.write(render(("k", "hits", "queries"), rows, args.format))
    return 0


def cmd_stub(args) -> int:
    from .backends import serve

    print(f"serving on http://{args.host}:{args.port}", file=sys.stderr)
    try:
        serve(args.host, args.port, background=False)
    except KeyboardInterrupt:
        pass
    return 0


COMMANDS = {
    "gen": cmd_gen,
    "enrich": cmd_enrich,
    "query": cmd_query,
    "bench": cmd_bench,
    "agree": cmd_agree,
    "recall": cmd_recall,
    "stub": cmd_stub,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except VexbenchError as exc:
        print(f"vexbench {args.command}: {exc.stage} error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"vexbench {args.command}: io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"vexbench {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
