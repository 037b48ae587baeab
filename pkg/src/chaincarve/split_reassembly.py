"""Reassembly of files split across several transactions from one sender."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

from .codec import BytePayload, hex_decode
from .exceptions import ChainCarveError
from .file_carve import (
    CarvedFile,
    ChunkInfo,
    Registry,
    carve_bytes,
    carve_start,
    find_trailer,
    first_header,
    load_registry,
)
from .ingest import RecordStore, TxRecord

__all__ = [
    "ReassemblyJob",
    "WindowIncomplete",
    "find_candidates",
    "extract_chunk",
    "reassemble",
    "reassemble_record",
    "DEFAULT_WINDOW_BLOCKS",
]

# ~24 h of blocks at ~13 s per block
DEFAULT_WINDOW_BLOCKS = 6700
CHUNK_MODES = ("raw", "abi_bytes")
_WORD = 32


class WindowIncomplete(UserWarning):
    """The record store ends before the search window does."""


@dataclass(frozen=True)
class ReassemblyJob:
    start: TxRecord
    window_blocks: int = DEFAULT_WINDOW_BLOCKS
    chunk_mode: str = "raw"

    def __post_init__(self):
        if self.window_blocks < 1:
            raise ValueError("window_blocks must be >= 1")
        if self.chunk_mode not in CHUNK_MODES:
            raise ValueError(f"chunk_mode must be one of {CHUNK_MODES}")


def find_candidates(job: ReassemblyJob, store: RecordStore | Iterable[TxRecord]) -> list[TxRecord]:
    """Follow-up transactions from the same sender inside the block window.

    The window is ``(start_block, start_block + window_blocks]``.
    """
    if not isinstance(store, RecordStore):
        store = RecordStore(store)
    lo = job.start.block_number + 1
    hi = job.start.block_number + job.window_blocks
    if store.max_block is None or store.max_block < hi:
        warnings.warn(
            f"record store ends at block {store.max_block}, window runs to {hi}",
            WindowIncomplete,
            stacklevel=2,
        )
    return [r for r in store.sent_by(job.start.from_addr, lo, hi) if r.has_input]


def extract_chunk(p: BytePayload | bytes, mode: str = "raw") -> tuple[bytes, bool]:
    """Data bytes of one chunk and whether ABI unwrapping fell back to raw.

    ``abi_bytes`` expects ``selector(4) | offset word == 0x20 | length word L |
    L bytes zero-padded to a word boundary``.
    """
    data = p.data if isinstance(p, BytePayload) else bytes(p)
    if mode == "raw":
        return data, False
    if mode != "abi_bytes":
        raise ValueError(f"unknown chunk mode {mode!r}")
    head = 4 + 2 * _WORD
    if len(data) < head:
        return data, True
    offset = int.from_bytes(data[4:4 + _WORD], "big")
    length = int.from_bytes(data[4 + _WORD:head], "big")
    padded = -(-length // _WORD) * _WORD
    if offset != _WORD or len(data) < head + padded or len(data) > head + padded:
        return data, True
    return data[head:head + length], False


def reassemble(
    job: ReassemblyJob,
    candidates: Sequence[TxRecord],
    registry: Registry | None = None,
) -> CarvedFile:
    """Concatenate chunks until the carved type's trailer shows up.

    Chunks are appended blindly, so an unrelated transaction inside the
    window lands in the middle of the file; ``CarvedFile.chunks`` records
    where every piece came from.
    """
    registry = registry or load_registry()
    ordered = sorted(candidates, key=lambda r: (r.block_number, r.tx_index))
    buf = bytearray()
    chunks: list[ChunkInfo] = []
    hit = None
    entry = None
    for rec in [job.start, *ordered]:
        chunk, fellback = extract_chunk(hex_decode(rec.input_hex), job.chunk_mode)
        scan_from = max(0, len(buf) - _longest_trailer(entry))
        chunks.append(ChunkInfo(rec.tx_hash, rec.block_number, len(buf), len(chunk), fellback))
        buf += chunk
        if hit is None:
            hit = first_header(bytes(buf), registry)
            if hit is None:
                continue
            entry = registry.entry(hit.file_type)
            scan_from = hit.offset + hit.length
        if not entry.trailer_variants:
            continue
        end = find_trailer(bytes(buf), entry, max(scan_from, hit.offset + hit.length))
        if end is not None:
            data = bytes(buf)
            start = carve_start(data, hit)
            return CarvedFile(
                hit.file_type,
                data[start:end],
                "complete",
                tuple(c.tx_hash for c in chunks),
                start,
                tuple(chunks),
            )
    if hit is None:
        raise ChainCarveError(f"no registered header in start transaction {job.start.tx_hash}")
    carved = carve_bytes(bytes(buf), tuple(c.tx_hash for c in chunks), registry)
    return CarvedFile(
        carved.file_type,
        carved.data,
        "truncated" if entry.trailer_variants else "unknown",
        carved.source_txs,
        carved.header_offset,
        tuple(chunks),
    )


def _longest_trailer(entry) -> int:
    if entry is None or not entry.trailer_variants:
        return 0
    return max(len(t) for t in entry.trailer_variants) - 1


def reassemble_record(
    start: TxRecord,
    store: RecordStore | Iterable[TxRecord],
    window_blocks: int = DEFAULT_WINDOW_BLOCKS,
    chunk_mode: str = "raw",
    registry: Registry | None = None,
) -> CarvedFile:
    job = ReassemblyJob(start, window_blocks, chunk_mode)
    return reassemble(job, find_candidates(job, store), registry)
