"""Signature-based file detection and carving over transaction payloads."""

from __future__ import annotations

import json
import re
import subprocess
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

from sklearn.base import BaseEstimator, TransformerMixin

from .codec import BytePayload, hex_decode
from .exceptions import IoError, RegistryFormatError

__all__ = [
    "SignatureEntry",
    "Registry",
    "CarvedFile",
    "ChunkInfo",
    "SignatureHit",
    "signature_registry",
    "load_registry",
    "scan_payload",
    "carve_file",
    "carve_bytes",
    "write_carved",
    "run_image_classifier",
    "FileCarver",
    "IMAGE_TYPES",
]

IMAGE_TYPES = frozenset({"png", "jpg", "gif"})
COMPLETENESS = ("complete", "truncated", "unknown")
# how far before an "html>" marker we look for the opening "<html"
HTML_LOOKBACK = 16


@dataclass(frozen=True)
class SignatureEntry:
    file_type: str
    header_variants: tuple[bytes, ...]
    trailer_variants: tuple[bytes, ...] = ()

    def __post_init__(self):
        if not self.header_variants:
            raise RegistryFormatError(f"{self.file_type}: no header variants")
        for h in self.header_variants:
            if len(h) < 2:
                raise RegistryFormatError(f"{self.file_type}: header {h.hex()} shorter than 2 bytes")


class SignatureHit(NamedTuple):
    file_type: str
    offset: int
    which: str  # "header" | "trailer"
    length: int


class Registry:
    """Immutable set of signatures plus the compiled scanner."""

    def __init__(self, entries: Iterable[SignatureEntry]):
        self.entries: tuple[SignatureEntry, ...] = tuple(entries)
        self._by_type: dict[str, SignatureEntry] = {}
        self._pattern_owner: dict[bytes, tuple[str, str]] = {}
        for e in self.entries:
            if e.file_type in self._by_type:
                raise RegistryFormatError(f"duplicate file type {e.file_type!r}")
            self._by_type[e.file_type] = e
            for which, variants in (("header", e.header_variants), ("trailer", e.trailer_variants)):
                for v in variants:
                    if v in self._pattern_owner:
                        raise RegistryFormatError(f"pattern {v.hex()} registered twice")
                    self._pattern_owner[v] = (e.file_type, which)
        # longest first so that a longer pattern wins at a shared offset
        ordered = sorted(self._pattern_owner, key=lambda b: (-len(b), b))
        self._scanner = re.compile(b"|".join(re.escape(p) for p in ordered), re.DOTALL)

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def entry(self, file_type: str) -> SignatureEntry:
        return self._by_type[file_type]

    def types(self) -> list[str]:
        return list(self._by_type)

    def extended(self, entries: Iterable[SignatureEntry]) -> "Registry":
        merged = dict(self._by_type)
        for e in entries:
            merged[e.file_type] = e
        return Registry(merged.values())

    def finditer(self, data: bytes):
        owner = self._pattern_owner
        for m in self._scanner.finditer(data):
            ftype, which = owner[m.group()]
            yield SignatureHit(ftype, m.start(), which, m.end() - m.start())


def _parse_entries(obj) -> list[SignatureEntry]:
    items = obj.get("signatures") if isinstance(obj, dict) else obj
    if not isinstance(items, list):
        raise RegistryFormatError("expected a JSON list of signature objects")
    out = []
    for i, item in enumerate(items):
        if not isinstance(item, dict) or "type" not in item or "headers" not in item:
            raise RegistryFormatError(f"entry {i}: needs 'type' and 'headers'")
        try:
            headers = tuple(bytes.fromhex(h) for h in item["headers"])
            trailers = tuple(bytes.fromhex(t) for t in item.get("trailers") or ())
        except (TypeError, ValueError) as exc:
            raise RegistryFormatError(f"entry {i} ({item['type']}): {exc}") from None
        out.append(SignatureEntry(str(item["type"]), headers, trailers))
    return out


@lru_cache(maxsize=1)
def _default_registry() -> Registry:
    text = resources.files("chaincarve").joinpath("data/signatures.json").read_text("utf-8")
    return Registry(_parse_entries(json.loads(text)))


def load_registry(extension_path: str | Path | None = None) -> Registry:
    """Default registry, optionally extended/overridden by a JSON file."""
    reg = _default_registry()
    if extension_path is None:
        return reg
    try:
        obj = json.loads(Path(extension_path).read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise RegistryFormatError(f"{extension_path}: {exc}") from None
    except OSError as exc:
        raise IoError(str(exc)) from exc
    return reg.extended(_parse_entries(obj))


def signature_registry(extension_path: str | Path | None = None) -> list[SignatureEntry]:
    return list(load_registry(extension_path))


@dataclass(frozen=True)
class ChunkInfo:
    tx_hash: str
    block_number: int | None
    offset: int  # start of this chunk within the accumulated buffer
    length: int
    fallback: bool = False


@dataclass(frozen=True)
class CarvedFile:
    file_type: str
    data: bytes
    completeness: str
    source_txs: tuple[str, ...]
    header_offset: int
    chunks: tuple[ChunkInfo, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if self.completeness not in COMPLETENESS:
            raise ValueError(f"bad completeness {self.completeness!r}")
        if not self.source_txs:
            raise ValueError("source_txs must be non-empty")

    @property
    def is_image(self) -> bool:
        return self.file_type in IMAGE_TYPES

    def metadata(self) -> dict:
        meta = {
            "file_type": self.file_type,
            "completeness": self.completeness,
            "source_txs": list(self.source_txs),
            "header_offset": self.header_offset,
            "size": len(self.data),
        }
        if self.chunks:
            meta["chunks"] = [
                {"tx": c.tx_hash, "block": c.block_number, "offset": c.offset,
                 "length": c.length, "fallback": c.fallback}
                for c in self.chunks
            ]
        return meta


def scan_payload(p: BytePayload | bytes, registry: Registry | None = None) -> list[SignatureHit]:
    """All non-overlapping signature occurrences, ascending by offset."""
    data = p.data if isinstance(p, BytePayload) else p
    return list((registry or _default_registry()).finditer(data))


def first_header(data: bytes, registry: Registry | None = None) -> SignatureHit | None:
    for hit in (registry or _default_registry()).finditer(data):
        if hit.which == "header":
            return hit
    return None


def find_trailer(data: bytes, entry: SignatureEntry, start: int) -> int | None:
    """End offset (exclusive) of the earliest trailer at or after ``start``."""
    best = None
    for t in entry.trailer_variants:
        i = data.find(t, start)
        if i >= 0 and (best is None or i < best[0] or (i == best[0] and len(t) > best[1])):
            best = (i, len(t))
    return None if best is None else best[0] + best[1]


def carve_start(data: bytes, hit: SignatureHit) -> int:
    if hit.file_type == "html":
        lo = max(0, hit.offset - HTML_LOOKBACK)
        i = data.rfind(b"<html", lo, hit.offset + 4)
        if i >= 0:
            return i
    return hit.offset


def carve_bytes(
    data: bytes,
    source_txs: Sequence[str] = ("unknown",),
    registry: Registry | None = None,
) -> CarvedFile | None:
    registry = registry or _default_registry()
    hit = first_header(data, registry)
    if hit is None:
        return None
    entry = registry.entry(hit.file_type)
    start = carve_start(data, hit)
    end = find_trailer(data, entry, hit.offset + hit.length) if entry.trailer_variants else None
    if end is not None:
        completeness = "complete"
    else:
        end = len(data)
        completeness = "truncated" if entry.trailer_variants else "unknown"
    return CarvedFile(hit.file_type, data[start:end], completeness, tuple(source_txs), start)


def carve_file(
    input_hex: str, origin_tx: str | None = None, registry: Registry | None = None
) -> CarvedFile | None:
    """Carve the file starting at the earliest registered header.

    The carving ends at the first matching trailer (inclusive) when one
    follows the header; otherwise it runs to the end of the payload.
    """
    return carve_bytes(hex_decode(input_hex).data, (origin_tx or "unknown",), registry)


def write_carved(file: CarvedFile, out_dir: str | Path, extra_meta: dict | None = None) -> Path:
    """Write ``<out_dir>/<type>/<tx>.<type>`` plus a ``.json`` sidecar.

    Name collisions get ``-1``, ``-2``, ... suffixes.
    """
    folder = Path(out_dir) / file.file_type
    stem = file.source_txs[0]
    try:
        folder.mkdir(parents=True, exist_ok=True)
        n = 0
        while True:
            name = stem if n == 0 else f"{stem}-{n}"
            path = folder / f"{name}.{file.file_type}"
            try:
                with open(path, "xb") as fh:
                    fh.write(file.data)
                break
            except FileExistsError:
                n += 1
        meta = file.metadata()
        if extra_meta:
            meta.update(extra_meta)
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write carving to {folder}: {exc}") from exc
    return path


def run_image_classifier(cmd: str, image_path: str | Path, timeout: float = 60.0) -> dict:
    """Run an external classifier on one image; expects ``{"label", "score"}`` JSON."""
    try:
        proc = subprocess.run([cmd, str(image_path)], capture_output=True, text=True,
                              timeout=timeout, check=True)
        obj = json.loads(proc.stdout)
    except (OSError, subprocess.SubprocessError, json.JSONDecodeError) as exc:
        return {"error": f"{type(exc).__name__}: {exc}"}
    score = obj.get("score") if isinstance(obj, dict) else None
    if (not isinstance(obj, dict) or not isinstance(obj.get("label"), str)
            or not isinstance(score, (int, float)) or not 0.0 <= score <= 1.0):
        return {"error": f"unexpected classifier output: {proc.stdout[:200]!r}"}
    return {"label": obj["label"], "score": float(score)}


class FileCarver(TransformerMixin, BaseEstimator):
    """``transform`` maps hex payloads (or TxRecords) to ``CarvedFile | None``."""

    def __init__(self, registry_path=None):
        self.registry_path = registry_path

    def fit(self, X=None, y=None):
        self.registry_ = load_registry(self.registry_path)
        return self

    def transform(self, X):
        if not hasattr(self, "registry_"):
            self.fit()
        out = []
        for item in X:
            if isinstance(item, str):
                out.append(carve_file(item, registry=self.registry_))
            else:
                out.append(carve_file(item.input_hex, item.tx_hash, self.registry_))
        return out
