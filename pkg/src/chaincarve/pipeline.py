"""Record-level scanning shared by the CLI and the throughput benchmark."""

from __future__ import annotations

from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .exceptions import HexDecodeError
from .file_carve import CarvedFile, Registry, carve_bytes, load_registry
from .codec import hex_decode
from .ingest import TxRecord
from .report import ScanReport, category_counts
from .text_restore import DEFAULT_POLICY, RestorePolicy, RestoredText, _Rejected, _restore

__all__ = ["ScanItem", "ScanResult", "scan_record", "scan_records"]


@dataclass
class ScanItem:
    record: TxRecord
    text: RestoredText | None = None
    carved: CarvedFile | None = None
    rejected: str | None = None


@dataclass
class ScanResult:
    items: list[ScanItem] = field(default_factory=list)
    report: ScanReport = field(default_factory=ScanReport)

    @property
    def texts(self) -> list[RestoredText]:
        return [it.text for it in self.items if it.text is not None]

    @property
    def carvings(self) -> list[tuple[CarvedFile, TxRecord]]:
        return [(it.carved, it.record) for it in self.items if it.carved is not None]


def scan_record(rec: TxRecord, policy: RestorePolicy = DEFAULT_POLICY,
                registry: Registry | None = None) -> ScanItem:
    """Carve first; payloads that hold a file are not also restored as text."""
    item = ScanItem(rec)
    if not rec.has_input:
        item.rejected = "empty"
        return item
    try:
        data = hex_decode(rec.input_hex).data
    except HexDecodeError:
        item.rejected = "bad_hex"
        return item
    item.carved = carve_bytes(data, (rec.tx_hash,), registry)
    if item.carved is not None:
        return item
    try:
        item.text = _restore(rec.input_hex, policy, rec.tx_hash, rec.block_number,
                             rec.from_addr, rec.to_addr, rec.block_timestamp)
    except _Rejected as r:
        item.rejected = r.reason
    return item


def _scan_chunk(args):
    recs, policy, registry_path = args
    registry = load_registry(registry_path)
    return [scan_record(r, policy, registry) for r in recs]


def _chunks(records: Iterable[TxRecord], size: int) -> Iterator[list[TxRecord]]:
    buf = []
    for r in records:
        buf.append(r)
        if len(buf) >= size:
            yield buf
            buf = []
    if buf:
        yield buf


def scan_records(
    records: Iterable[TxRecord],
    policy: RestorePolicy = DEFAULT_POLICY,
    registry_path=None,
    workers: int = 1,
    chunk_size: int = 2000,
) -> ScanResult:
    """Scan every record; output is ordered by ``(block_number, tx_index)``."""
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            jobs = ((c, policy, registry_path) for c in _chunks(records, chunk_size))
            items = [it for part in pool.map(_scan_chunk, jobs) for it in part]
    else:
        registry = load_registry(registry_path)
        items = [scan_record(r, policy, registry) for r in records]
    items.sort(key=lambda it: (it.record.block_number, it.record.tx_index))

    result = ScanResult(items)
    rep = result.report
    rep.txs_scanned = len(items)
    rep.blocks_scanned = len({it.record.block_number for it in items})
    rep.skipped = Counter(it.rejected for it in items if it.rejected)
    category_counts((it.text or it.carved for it in items if it.text or it.carved), rep)
    return result
