"""Scan statistics: category counts, temporal buckets, word frequencies."""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Iterable, NamedTuple

from .exceptions import MissingTimestamp
from .file_carve import IMAGE_TYPES, CarvedFile
from .sentiment import tokenize
from .text_restore import RestoredText

__all__ = [
    "COUNT_KEYS",
    "ScanReport",
    "ReportItem",
    "TemporalBuckets",
    "category_counts",
    "temporal_buckets",
    "word_frequency",
    "load_stopwords",
    "default_stopwords",
    "item_for_text",
    "item_for_file",
]

COUNT_KEYS = ("common_files", "images", "english", "chinese", "mail", "link")
_KIND_TO_KEY = {"english": "english", "chinese": "chinese", "email": "mail", "link": "link"}
BUCKET_MODES = ("quarter", "per_million_blocks")


@dataclass
class ScanReport:
    counts: dict[str, int] = field(default_factory=lambda: dict.fromkeys(COUNT_KEYS, 0))
    blocks_scanned: int = 0
    txs_scanned: int = 0
    skipped: Counter = field(default_factory=Counter)

    @property
    def text_total(self) -> int:
        return sum(self.counts[k] for k in ("english", "chinese", "mail", "link"))

    @property
    def file_total(self) -> int:
        return self.counts["common_files"] + self.counts["images"]

    def to_json(self) -> dict:
        return {
            "counts": dict(self.counts),
            "text_total": self.text_total,
            "file_total": self.file_total,
            "blocks_scanned": self.blocks_scanned,
            "txs_scanned": self.txs_scanned,
            "skipped": dict(sorted(self.skipped.items())),
        }


def _count_key(item) -> str:
    if isinstance(item, CarvedFile):
        return "images" if item.file_type in IMAGE_TYPES else "common_files"
    if isinstance(item, RestoredText):
        return _KIND_TO_KEY[item.kind]
    raise TypeError(f"cannot count {type(item).__name__}")


def category_counts(items: Iterable[RestoredText | CarvedFile], report: ScanReport | None = None) -> ScanReport:
    report = report if report is not None else ScanReport()
    for item in items:
        report.counts[_count_key(item)] += 1
    return report


class ReportItem(NamedTuple):
    category: str
    block_number: int
    block_timestamp: int | None = None


def item_for_text(t: RestoredText) -> ReportItem:
    return ReportItem(_KIND_TO_KEY[t.kind], t.block_number, t.block_timestamp)


def item_for_file(f: CarvedFile, block_number: int, block_timestamp: int | None = None) -> ReportItem:
    return ReportItem(_count_key(f), block_number, block_timestamp)


@dataclass
class TemporalBuckets:
    mode: str
    buckets: list[tuple[object, str, int]]

    def totals(self) -> Counter:
        c = Counter()
        for _, cat, n in self.buckets:
            c[cat] += n
        return c

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bucket", "category", "count"])
        w.writerows(self.buckets)
        return buf.getvalue()


def quarter_key(timestamp: int) -> str:
    dt = datetime.fromtimestamp(timestamp, tz=timezone.utc)
    return f"{dt.year}-Q{(dt.month - 1) // 3 + 1}"


def temporal_buckets(items: Iterable[ReportItem], mode: str = "per_million_blocks") -> TemporalBuckets:
    """Count items per (bucket, category).

    ``per_million_blocks`` keys are ``block_number // 1_000_000``; ``quarter``
    keys are UTC ``YYYY-Qn`` derived from the block timestamp.
    """
    if mode not in BUCKET_MODES:
        raise ValueError(f"mode must be one of {BUCKET_MODES}")
    c = Counter()
    for it in items:
        if mode == "quarter":
            if it.block_timestamp is None:
                raise MissingTimestamp(f"item in block {it.block_number} has no timestamp")
            key = quarter_key(it.block_timestamp)
        else:
            key = it.block_number // 1_000_000
        c[(key, it.category)] += 1
    return TemporalBuckets(mode, [(k, cat, n) for (k, cat), n in sorted(c.items())])


def word_frequency(texts: Iterable[str], stopwords: Iterable[str] = (), top_k: int = 100) -> list[tuple[str, int]]:
    """Most frequent tokens, by count descending then token ascending."""
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    stop = {s.lower() for s in stopwords}
    counts = Counter()
    for text in texts:
        if not text or not text.strip():
            continue
        counts.update(t for t in tokenize(text, "auto") if t not in stop)
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:top_k]


def wordfreq_csv(ranked: Iterable[tuple[str, int]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["token", "count"])
    w.writerows(ranked)
    return buf.getvalue()


def load_stopwords(path: str | Path) -> set[str]:
    with open(path, encoding="utf-8") as fh:
        return {line.strip().lower() for line in fh if line.strip() and not line.startswith("#")}


def default_stopwords() -> set[str]:
    out = set()
    for name in ("stopwords_en.txt", "stopwords_zh.txt"):
        text = resources.files("chaincarve").joinpath(f"data/{name}").read_text("utf-8")
        out |= {w.strip().lower() for w in text.splitlines() if w.strip() and not w.startswith("#")}
    return out
