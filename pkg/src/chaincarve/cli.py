"""``chaincarve`` command line.

Every stage reads and writes files under ``--out``::

    records/         fetched NDJSON transaction records
    texts.ndjson     restored texts
    files/           carved files, sidecars and files/index.ndjson
    model.ccft       sentiment model
    sentiment.ndjson per-text sentiment predictions
    graph/           embedding network exports and statistics
    report/          summary.json, buckets.csv, wordfreq.csv
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from pathlib import Path

from . import __version__
from .exceptions import (
    ChainCarveError,
    FormatError,
    HexDecodeError,
    IoError,
    RangeFetchError,
    TransportError,
)
from .file_carve import IMAGE_TYPES, run_image_classifier, write_carved
from .ien_graph import build_ien, degree_stats, export_graph, histogram_csv
from .ingest import FetchReport, RecordStore, fetch_block, fetch_range, read_records, resolve_endpoint, write_records
from .pipeline import scan_records
from .report import (
    ScanReport,
    category_counts,
    default_stopwords,
    item_for_text,
    load_stopwords,
    temporal_buckets,
    word_frequency,
    wordfreq_csv,
    ReportItem,
)
from .sentiment import (
    TrainParams,
    evaluate,
    load_model,
    predict,
    read_corpus,
    save_model,
    train,
)
from .split_reassembly import DEFAULT_WINDOW_BLOCKS, ReassemblyJob, find_candidates, reassemble
from .text_restore import RestorePolicy, RestoredText, dedupe_stream

log = logging.getLogger("chaincarve")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_TRANSPORT = 0, 1, 2, 3

_KIND_CATEGORY = {"chinese": "chinese", "english": "english", "link": "link", "email": "email"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _write_ndjson(path: Path, rows) -> int:
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
            n += 1
    return n


def _read_ndjson(path: Path):
    if not path.exists():
        return
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    yield json.loads(line)
                except json.JSONDecodeError as exc:
                    raise FormatError(f"{path}: {exc.msg}", lineno) from None


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


# ------------------------------------------------------------------ commands

def cmd_fetch(args) -> int:
    url = resolve_endpoint(args.rpc_url)
    out = Path(args.out) / "records"
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"blocks_{args.from_block}_{args.to_block}.ndjson"
    report = FetchReport()
    fetch = (lambda e, n: fetch_block(e, n, use_trace=True)) if args.trace else fetch_block
    blocks = fetch_range(url, args.from_block, args.to_block, args.parallelism,
                         report=report, fetch=fetch)
    try:
        n = write_records((tx for b in blocks for tx in b.txs), path, drop_empty=args.drop_empty)
    finally:
        _write_json(out / f"blocks_{args.from_block}_{args.to_block}.report.json", {
            "blocks_ok": report.blocks_ok,
            "retries": {str(k): v for k, v in sorted(report.retries.items())},
            "failures": {str(k): v for k, v in sorted(report.failures.items())},
        })
    print(f"wrote {n} records to {path}")
    return EXIT_OK


def _record_paths(args) -> list[Path]:
    paths = [Path(p) for p in args.records]
    if not paths:
        rec_dir = Path(args.out) / "records"
        paths = sorted(rec_dir.glob("*.ndjson")) + sorted(rec_dir.glob("*.ndjson.gz"))
    if not paths:
        raise FormatError("no record files given and none found under --out/records")
    return paths


def _iter_records(paths):
    for p in paths:
        yield from read_records(p)


def cmd_scan(args) -> int:
    out = Path(args.out)
    policy = RestorePolicy(min_chars=args.policy_min_chars, dedupe=args.dedupe)
    result = scan_records(_iter_records(_record_paths(args)), policy,
                          registry_path=args.registry, workers=args.workers)

    texts = result.texts
    if policy.dedupe:
        texts = list(dedupe_stream(texts, True))
    _write_ndjson(out / "texts.ndjson", (t.to_json() for t in texts))

    # carvings are regenerated wholesale so reruns do not pile up "-1" copies
    shutil.rmtree(out / "files", ignore_errors=True)
    index = []
    for carved, rec in result.carvings:
        path = write_carved(carved, out / "files")
        meta = {"block": rec.block_number, "from": rec.from_addr, "to": rec.to_addr,
                "timestamp": rec.block_timestamp}
        if args.image_classifier_cmd and carved.file_type in IMAGE_TYPES:
            meta["classifier"] = run_image_classifier(args.image_classifier_cmd, path)
        sidecar = path.with_suffix(".json")
        full = json.loads(sidecar.read_text())
        full.update(meta)
        _write_json(sidecar, full)
        index.append({"tx": rec.tx_hash, "file_type": carved.file_type,
                      "completeness": carved.completeness,
                      "path": str(path.relative_to(out)), **meta})
    _write_ndjson(out / "files" / "index.ndjson", index)

    _write_json(out / "report" / "summary.json", result.report.to_json())
    print(json.dumps(result.report.to_json()["counts"], sort_keys=True))
    return EXIT_OK


def cmd_reassemble(args) -> int:
    out = Path(args.out)
    store = RecordStore.from_files(_record_paths(args))
    mode = args.chunk_mode.replace("-", "_")
    shutil.rmtree(out / "files" / "reassembled", ignore_errors=True)
    done = []
    for entry in _read_ndjson(out / "files" / "index.ndjson"):
        if entry.get("completeness") != "truncated":
            continue
        start = store.get(entry["tx"])
        if start is None:
            log.warning("start transaction %s not in record store", entry["tx"])
            continue
        job = ReassemblyJob(start, args.window_blocks, mode)
        carved = reassemble(job, find_candidates(job, store))
        path = write_carved(carved, out / "files" / "reassembled")
        done.append({"tx": start.tx_hash, "file_type": carved.file_type,
                     "completeness": carved.completeness, "chunks": len(carved.source_txs),
                     "path": str(path.relative_to(out)), "block": start.block_number,
                     "from": start.from_addr, "to": start.to_addr,
                     "timestamp": start.block_timestamp})
    _write_ndjson(out / "files" / "reassembled" / "index.ndjson", done)
    print(f"reassembled {len(done)} file(s); "
          f"{sum(d['completeness'] == 'complete' for d in done)} complete")
    return EXIT_OK


def _params(args) -> TrainParams:
    return TrainParams(dim=args.dim, lr=args.lr, epochs=args.epochs, ngram_order=args.ngram_order,
                       buckets=args.buckets, seed=args.seed, min_count=args.min_count)


def cmd_train(args) -> int:
    corpus = read_corpus(args.corpus)
    model = train(corpus, _params(args), args.lang)
    path = Path(args.model) if args.model else Path(args.out) / "model.ccft"
    path.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, path)
    print(f"trained on {len(corpus)} documents; model written to {path}")
    return EXIT_OK


def _model_path(args) -> Path:
    return Path(args.model) if args.model else Path(args.out) / "model.ccft"


def cmd_classify(args) -> int:
    out = Path(args.out)
    model = load_model(_model_path(args))
    src = Path(args.texts) if args.texts else out / "texts.ndjson"
    rows = []
    for obj in _read_ndjson(src):
        text = obj.get("text") or ""
        if not text.strip():
            continue
        p = predict(model, text)
        if p.probability >= args.min_prob:
            rows.append({"tx": obj.get("tx"), "label": p.label, "probability": p.probability})
    n = _write_ndjson(out / "sentiment.ndjson", rows)
    print(f"classified {n} text(s)")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model = load_model(_model_path(args))
    ev = evaluate(model, read_corpus(args.corpus))
    print(json.dumps(ev.to_json(), indent=2))
    return EXIT_OK


def _embedding_records(out: Path):
    for obj in _read_ndjson(out / "texts.ndjson"):
        yield {"from": obj.get("from"), "to": obj.get("to"),
               "category": _KIND_CATEGORY.get(obj.get("kind"), obj.get("kind"))}
    for obj in _read_ndjson(out / "files" / "index.ndjson"):
        yield {"from": obj.get("from"), "to": obj.get("to"), "category": "file"}


def cmd_graph(args) -> int:
    out = Path(args.out)
    g = build_ien(_embedding_records(out), args.category)
    fmt = {"edgelist": "edgelist_csv"}.get(args.format, args.format)
    ext = {"edgelist_csv": "csv", "dot": "dot", "graphml": "graphml"}[fmt]
    gdir = out / "graph"
    export_graph(g, fmt, gdir / f"ien_{args.category}.{ext}")
    stats = degree_stats(g, args.top_k)
    _write_json(gdir / f"stats_{args.category}.json", {**stats.to_json(), "skipped": dict(g.skipped)})
    for name, hist in (("in", stats.in_hist), ("out", stats.out_hist), ("total", stats.total_hist)):
        (gdir / f"degree_{name}_{args.category}.csv").write_text(histogram_csv(hist))
    print(f"{stats.node_count} nodes, {stats.edge_count} edges; "
          f"embed once {stats.fraction_embed_once:.3f}, <6 {stats.fraction_embed_lt6:.3f}")
    return EXIT_OK


def cmd_report(args) -> int:
    out = Path(args.out)
    texts = [RestoredText.from_json(o) for o in _read_ndjson(out / "texts.ndjson")]
    files = list(_read_ndjson(out / "files" / "index.ndjson"))

    summary_path = out / "report" / "summary.json"
    prior = json.loads(summary_path.read_text()) if summary_path.exists() else {}
    rep = ScanReport(blocks_scanned=prior.get("blocks_scanned", 0),
                     txs_scanned=prior.get("txs_scanned", 0))
    rep.skipped.update(prior.get("skipped", {}))
    category_counts(texts, rep)
    for f in files:
        rep.counts["images" if f["file_type"] in IMAGE_TYPES else "common_files"] += 1
    _write_json(summary_path, rep.to_json())

    items = [item_for_text(t) for t in texts]
    items += [ReportItem("images" if f["file_type"] in IMAGE_TYPES else "common_files",
                         f["block"], f.get("timestamp")) for f in files]
    buckets = temporal_buckets(items, args.mode.replace("-", "_"))
    (out / "report" / "buckets.csv").write_text(buckets.to_csv(), encoding="utf-8")

    stop = load_stopwords(args.stopwords) if args.stopwords else default_stopwords()
    ranked = word_frequency((t.text for t in texts), stop, args.top_k)
    (out / "report" / "wordfreq.csv").write_text(wordfreq_csv(ranked), encoding="utf-8")
    print(json.dumps(rep.to_json()["counts"], sort_keys=True))
    return EXIT_OK


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="chaincarve", description="Restore and analyze data embedded in Ethereum transaction input fields.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--out", default="out", help="output directory (default: out)")
        return sp

    sp = common(sub.add_parser("fetch", help="fetch a block range into NDJSON records"))
    sp.add_argument("--rpc-url", help="JSON-RPC endpoint (or CHAINCARVE_RPC_URL)")
    sp.add_argument("--from-block", type=int, required=True)
    sp.add_argument("--to-block", type=int, required=True)
    sp.add_argument("--parallelism", type=int, default=4)
    sp.add_argument("--drop-empty", action="store_true", help="skip records with empty input")
    sp.add_argument("--trace", action="store_true", help="use trace_block instead of full blocks")
    sp.set_defaults(func=cmd_fetch)

    sp = common(sub.add_parser("scan", help="restore texts and carve files from records"))
    sp.add_argument("records", nargs="*", help="record files (default: <out>/records/*)")
    sp.add_argument("--policy-min-chars", type=int, default=8)
    sp.add_argument("--dedupe", action="store_true")
    sp.add_argument("--registry", help="signature registry extension JSON")
    sp.add_argument("--image-classifier-cmd")
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_scan)

    sp = common(sub.add_parser("reassemble", help="complete truncated carvings from follow-up transactions"))
    sp.add_argument("records", nargs="*")
    sp.add_argument("--window-blocks", type=int, default=DEFAULT_WINDOW_BLOCKS)
    sp.add_argument("--chunk-mode", choices=("raw", "abi-bytes"), default="raw")
    sp.set_defaults(func=cmd_reassemble)

    sp = common(sub.add_parser("train", help="train a sentiment model from a label<TAB>text corpus"))
    sp.add_argument("corpus")
    sp.add_argument("--model")
    sp.add_argument("--seed", type=int, default=42)
    sp.add_argument("--dim", type=int, default=100)
    sp.add_argument("--lr", type=float, default=0.1)
    sp.add_argument("--epochs", type=int, default=5)
    sp.add_argument("--ngram-order", type=int, default=2)
    sp.add_argument("--buckets", type=int, default=2 ** 21)
    sp.add_argument("--min-count", type=int, default=1)
    sp.add_argument("--lang", choices=("auto", "english", "chinese"), default="auto")
    sp.set_defaults(func=cmd_train)

    sp = common(sub.add_parser("classify", help="label restored texts with a sentiment model"))
    sp.add_argument("texts", nargs="?", help="texts NDJSON (default: <out>/texts.ndjson)")
    sp.add_argument("--model")
    sp.add_argument("--min-prob", type=float, default=0.0)
    sp.set_defaults(func=cmd_classify)

    sp = common(sub.add_parser("evaluate", help="accuracy and confusion matrix on a labeled corpus"))
    sp.add_argument("corpus")
    sp.add_argument("--model")
    sp.set_defaults(func=cmd_evaluate)

    sp = common(sub.add_parser("graph", help="build and export the embedding network"))
    sp.add_argument("--category", choices=("file", "link", "chinese", "english", "all"), default="all")
    sp.add_argument("--format", choices=("edgelist", "dot", "graphml"), default="edgelist")
    sp.add_argument("--top-k", type=int, default=10)
    sp.set_defaults(func=cmd_graph)

    sp = common(sub.add_parser("report", help="counts, temporal buckets and word frequencies"))
    sp.add_argument("--stopwords")
    sp.add_argument("--top-k", type=int, default=100)
    sp.add_argument("--mode", choices=("per-million-blocks", "quarter"), default="per-million-blocks")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (TransportError, RangeFetchError) as exc:
        print(f"chaincarve: transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (FormatError, HexDecodeError, IoError, ChainCarveError, ValueError, OSError) as exc:
        print(f"chaincarve: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
