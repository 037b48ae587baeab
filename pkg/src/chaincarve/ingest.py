"""Transaction acquisition over JSON-RPC and the NDJSON record store."""

from __future__ import annotations

import bisect
import gzip
import json
import logging
import os
import re
import threading
import time
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator

import requests

from .exceptions import (
    AuthError,
    FormatError,
    IoError,
    MissingBlock,
    RangeFetchError,
    RpcError,
    TransportError,
)

__all__ = [
    "TxRecord",
    "BlockRecord",
    "FetchReport",
    "RecordStore",
    "fetch_block",
    "fetch_range",
    "write_records",
    "read_records",
    "resolve_endpoint",
    "RPC_URL_ENV",
]

log = logging.getLogger(__name__)

RPC_URL_ENV = "CHAINCARVE_RPC_URL"
FIELDS = ("block_number", "tx_index", "tx_hash", "from_addr", "to_addr", "value",
          "input_hex", "block_timestamp")

_HEX = re.compile(r"[0-9a-f]*")


def _norm_hex(value, name: str, nchars: int | None = None) -> str:
    if not isinstance(value, str):
        raise FormatError(f"{name}: expected hex string, got {type(value).__name__}")
    body = value[2:] if value[:2] in ("0x", "0X") else value
    body = body.lower()
    if not _HEX.fullmatch(body):
        raise FormatError(f"{name}: non-hex characters in {value[:20]!r}")
    if nchars is not None and len(body) != nchars:
        raise FormatError(f"{name}: expected {nchars} hex chars, got {len(body)}")
    if len(body) % 2:
        raise FormatError(f"{name}: odd hex length {len(body)}")
    return "0x" + body


def _nonneg_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise FormatError(f"{name}: expected non-negative integer, got {value!r}")
    return value


@dataclass(frozen=True)
class TxRecord:
    """One transaction, normalized: lowercase ``0x``-prefixed hex everywhere."""

    block_number: int
    tx_index: int
    tx_hash: str
    from_addr: str
    to_addr: str | None
    value: int
    input_hex: str
    block_timestamp: int

    def __post_init__(self):
        setattr_ = object.__setattr__
        for name in ("block_number", "tx_index", "value", "block_timestamp"):
            _nonneg_int(getattr(self, name), name)
        setattr_(self, "tx_hash", _norm_hex(self.tx_hash, "tx_hash", 64))
        setattr_(self, "from_addr", _norm_hex(self.from_addr, "from_addr", 40))
        if self.to_addr is not None:
            setattr_(self, "to_addr", _norm_hex(self.to_addr, "to_addr", 40))
        setattr_(self, "input_hex", _norm_hex(self.input_hex, "input_hex"))

    @property
    def has_input(self) -> bool:
        return len(self.input_hex) > 2

    def to_json(self) -> dict:
        return {f: getattr(self, f) for f in FIELDS}

    @classmethod
    def from_json(cls, obj) -> "TxRecord":
        if not isinstance(obj, dict):
            raise FormatError("record is not a JSON object")
        missing = [f for f in FIELDS if f not in obj]
        if missing:
            raise FormatError(f"missing fields {missing}")
        extra = set(obj) - set(FIELDS)
        if extra:
            raise FormatError(f"unexpected fields {sorted(extra)}")
        return cls(**{f: obj[f] for f in FIELDS})


@dataclass(frozen=True)
class BlockRecord:
    block_number: int
    timestamp: int
    txs: tuple[TxRecord, ...] = ()

    def __post_init__(self):
        for i, tx in enumerate(self.txs):
            if tx.tx_index != i:
                raise FormatError(f"block {self.block_number}: tx_index {tx.tx_index} at position {i}")


# --------------------------------------------------------------------------- RPC

def resolve_endpoint(endpoint: str | None) -> str:
    url = endpoint or os.environ.get(RPC_URL_ENV)
    if not url:
        raise TransportError(f"no RPC endpoint: pass --rpc-url or set {RPC_URL_ENV}")
    return url


_local = threading.local()


def _session() -> requests.Session:
    s = getattr(_local, "session", None)
    if s is None:
        s = _local.session = requests.Session()
    return s


def rpc_call(endpoint: str, method: str, params: list, timeout: float = 30.0):
    payload = {"jsonrpc": "2.0", "id": 1, "method": method, "params": params}
    try:
        resp = _session().post(endpoint, json=payload, timeout=timeout)
    except requests.RequestException as exc:
        raise TransportError(f"{method}: {exc}") from exc
    if resp.status_code in (401, 403):
        raise AuthError(f"{method}: HTTP {resp.status_code}")
    if resp.status_code != 200:
        raise TransportError(f"{method}: HTTP {resp.status_code}")
    try:
        body = resp.json()
    except ValueError as exc:
        raise TransportError(f"{method}: response is not JSON") from exc
    if not isinstance(body, dict):
        raise FormatError(f"{method}: response is not a JSON object")
    if body.get("error") is not None:
        err = body["error"]
        if isinstance(err, dict):
            raise RpcError(err.get("code"), str(err.get("message", "")))
        raise RpcError(None, str(err))
    return body.get("result")


def _quantity(value, name: str) -> int:
    if isinstance(value, int) and not isinstance(value, bool):
        return value
    if not isinstance(value, str) or not value.startswith("0x"):
        raise FormatError(f"{name}: bad quantity {value!r}")
    try:
        return int(value, 16)
    except ValueError:
        raise FormatError(f"{name}: bad quantity {value!r}") from None


def _tx_from_rpc(tx: dict, number: int, timestamp: int) -> TxRecord:
    try:
        return TxRecord(
            block_number=number,
            tx_index=_quantity(tx["transactionIndex"], "transactionIndex"),
            tx_hash=tx["hash"],
            from_addr=tx["from"],
            to_addr=tx.get("to"),
            value=_quantity(tx["value"], "value"),
            input_hex=tx.get("input", tx.get("data", "0x")),
            block_timestamp=timestamp,
        )
    except (KeyError, TypeError) as exc:
        raise FormatError(f"block {number}: malformed transaction object ({exc})") from None


def fetch_block(endpoint: str, n: int, *, use_trace: bool = False, timeout: float = 30.0) -> BlockRecord:
    """Fetch block ``n`` with full transaction objects.

    With ``use_trace`` the top-level call frames of ``trace_block`` are used
    instead; the header is still read for its timestamp.
    """
    if n < 0:
        raise ValueError("block number must be non-negative")
    block = rpc_call(endpoint, "eth_getBlockByNumber", [hex(n), not use_trace], timeout)
    if block is None:
        raise MissingBlock(n)
    if not isinstance(block, dict):
        raise FormatError(f"block {n}: result is not an object")
    timestamp = _quantity(block.get("timestamp"), "timestamp")
    if use_trace:
        txs = _txs_from_traces(rpc_call(endpoint, "trace_block", [hex(n)], timeout), n, timestamp)
    else:
        txs = [_tx_from_rpc(tx, n, timestamp) for tx in block.get("transactions") or ()]
        txs.sort(key=lambda t: t.tx_index)
    return BlockRecord(n, timestamp, tuple(txs))


def _txs_from_traces(traces, n: int, timestamp: int) -> list[TxRecord]:
    if traces is None:
        raise MissingBlock(n)
    out = []
    for tr in traces:
        if tr.get("traceAddress") or tr.get("type") not in ("call", "create"):
            continue
        action = tr.get("action") or {}
        created = tr.get("type") == "create"
        try:
            out.append(TxRecord(
                block_number=n,
                tx_index=int(tr["transactionPosition"]),
                tx_hash=tr["transactionHash"],
                from_addr=action["from"],
                to_addr=None if created else action.get("to"),
                value=_quantity(action.get("value", "0x0"), "value"),
                input_hex=action.get("init" if created else "input", "0x"),
                block_timestamp=timestamp,
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"block {n}: malformed trace ({exc})") from None
    out.sort(key=lambda t: t.tx_index)
    return out


@dataclass
class FetchReport:
    blocks_ok: int = 0
    retries: dict[int, int] = field(default_factory=dict)
    failures: dict[int, str] = field(default_factory=dict)

    @property
    def total_retries(self) -> int:
        return sum(self.retries.values())


def _fetch_with_retry(fetch, endpoint, n, attempts, backoff, sleep):
    last = None
    for attempt in range(attempts):
        try:
            return fetch(endpoint, n), attempt, None
        except AuthError:
            raise
        except (TransportError, RpcError, MissingBlock, FormatError) as exc:
            last = exc
            log.warning("block %d attempt %d/%d failed: %s", n, attempt + 1, attempts, exc)
            if attempt + 1 < attempts:
                sleep(backoff * (2 ** attempt))
    return None, attempts - 1, last


def fetch_range(
    endpoint: str,
    first: int,
    last: int,
    parallelism: int = 4,
    *,
    attempts: int = 3,
    backoff: float = 0.5,
    report: FetchReport | None = None,
    fetch: Callable[[str, int], BlockRecord] = fetch_block,
    sleep: Callable[[float], None] = time.sleep,
) -> Iterator[BlockRecord]:
    """Yield blocks ``first..last`` in ascending order.

    Blocks are fetched concurrently but emitted in order. A block that still
    fails after ``attempts`` tries is recorded in ``report`` and the stream
    continues; :class:`RangeFetchError` is raised once the stream ends. An
    :class:`AuthError` aborts immediately.
    """
    if first > last:
        raise ValueError(f"empty range [{first}, {last}]")
    if parallelism < 1:
        raise ValueError("parallelism must be positive")
    report = report if report is not None else FetchReport()
    window = parallelism * 4
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        pending = {}
        next_submit = first
        for n in range(first, last + 1):
            while next_submit <= last and next_submit < n + window:
                pending[next_submit] = pool.submit(
                    _fetch_with_retry, fetch, endpoint, next_submit, attempts, backoff, sleep)
                next_submit += 1
            try:
                block, retried, err = pending.pop(n).result()
            except AuthError:
                for f in pending.values():
                    f.cancel()
                raise
            if retried:
                report.retries[n] = retried
            if err is not None:
                report.failures[n] = f"{type(err).__name__}: {err}"
                continue
            report.blocks_ok += 1
            yield block
    if report.failures:
        raise RangeFetchError(report)


# ------------------------------------------------------------------- record files

def _open(path: Path, mode: str):
    if path.suffix == ".gz":
        return gzip.open(path, mode + "t", encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def write_records(records: Iterable[TxRecord], path: str | Path, *, drop_empty: bool = False) -> int:
    """Write NDJSON (gzip when the name ends in ``.gz``); returns the count written."""
    path = Path(path)
    seen = set()
    count = 0
    try:
        with _open(path, "w") as fh:
            for rec in records:
                if drop_empty and not rec.has_input:
                    continue
                key = (rec.block_number, rec.tx_index)
                if key in seen:
                    raise FormatError(f"duplicate (block, tx_index) {key}")
                seen.add(key)
                fh.write(json.dumps(rec.to_json(), separators=(",", ":")))
                fh.write("\n")
                count += 1
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc
    return count


def read_records(path: str | Path) -> Iterator[TxRecord]:
    path = Path(path)
    seen = set()
    try:
        fh = _open(path, "r")
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc
    with fh:
        try:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = TxRecord.from_json(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise FormatError(f"invalid JSON ({exc.msg})", lineno) from None
                except FormatError as exc:
                    raise FormatError(str(exc), lineno) from None
                key = (rec.block_number, rec.tx_index)
                if key in seen:
                    raise FormatError(f"duplicate (block, tx_index) {key}", lineno)
                seen.add(key)
                yield rec
        except (OSError, EOFError, gzip.BadGzipFile) as exc:
            raise IoError(f"{path}: {exc}") from exc


class RecordStore:
    """In-memory index of records by sender, for window lookups."""

    def __init__(self, records: Iterable[TxRecord] = ()):
        self._by_sender: dict[str, list[TxRecord]] = defaultdict(list)
        self._by_hash: dict[str, TxRecord] = {}
        self.min_block: int | None = None
        self.max_block: int | None = None
        for r in records:
            self.add(r)
        self._sorted = False

    @classmethod
    def from_files(cls, paths: Iterable[str | Path]) -> "RecordStore":
        store = cls()
        for p in paths:
            for r in read_records(p):
                store.add(r)
        return store

    def add(self, r: TxRecord) -> None:
        self._by_sender[r.from_addr].append(r)
        self._by_hash[r.tx_hash] = r
        self.min_block = r.block_number if self.min_block is None else min(self.min_block, r.block_number)
        self.max_block = r.block_number if self.max_block is None else max(self.max_block, r.block_number)
        self._sorted = False

    def __len__(self) -> int:
        return len(self._by_hash)

    def __iter__(self) -> Iterator[TxRecord]:
        self._sort()
        return iter(sorted(self._by_hash.values(), key=lambda r: (r.block_number, r.tx_index)))

    def get(self, tx_hash: str) -> TxRecord | None:
        return self._by_hash.get(tx_hash.lower())

    def _sort(self):
        if not self._sorted:
            for lst in self._by_sender.values():
                lst.sort(key=lambda r: (r.block_number, r.tx_index))
            self._sorted = True

    def sent_by(self, sender: str, lo_block: int, hi_block: int) -> list[TxRecord]:
        """Records from ``sender`` with ``lo_block <= block_number <= hi_block``."""
        self._sort()
        lst = self._by_sender.get(sender.lower(), [])
        i = bisect.bisect_left(lst, lo_block, key=lambda r: r.block_number)
        j = bisect.bisect_right(lst, hi_block, key=lambda r: r.block_number)
        return lst[i:j]
