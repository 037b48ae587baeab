"""Hex decoding and the UTF-8 gibberish filter.

The filter walks the payload left to right. At every offset it tries to
read one well-formed UTF-8 scalar (RFC 3629: no overlongs, no surrogates,
nothing above U+10FFFF); a hit is kept and skipped over, a miss drops a
single byte.

The stdlib decoder in ``errors="ignore"`` mode does exactly this. On a bad
sequence it drops the maximal ill-formed subpart, which is a lead byte plus
the continuation bytes that still looked valid. A continuation byte can
never start a scalar, so dropping them together equals dropping one byte at
a time.
"""

from __future__ import annotations

import binascii
import re
from dataclasses import dataclass

from .exceptions import NonHexCharacter, OddLength

__all__ = ["BytePayload", "hex_decode", "hex_encode", "utf8_filter", "utf8_filter_text", "strip_0x"]

_NON_HEX = re.compile(r"[^0-9a-fA-F]")


@dataclass(frozen=True)
class BytePayload:
    data: bytes
    origin_tx: str | None = None

    def __len__(self) -> int:
        return len(self.data)


def strip_0x(s: str) -> str:
    return s[2:] if s[:2] in ("0x", "0X") else s


def hex_decode(s: str, origin_tx: str | None = None) -> BytePayload:
    """Decode an optionally ``0x``-prefixed hex string.

    >>> hex_decode("0x48656c6c6f").data
    b'Hello'
    """
    body = strip_0x(s)
    try:
        return BytePayload(binascii.unhexlify(body), origin_tx)
    except (binascii.Error, ValueError):
        pass
    bad = _NON_HEX.search(body)
    if bad is not None:
        prefix = len(s) - len(body)
        raise NonHexCharacter(bad.start() + prefix, bad.group())
    raise OddLength(len(body))


def hex_encode(data: bytes) -> str:
    return "0x" + data.hex()


def utf8_filter_text(data: bytes) -> str:
    """The filtered payload, already decoded."""
    return data.decode("utf-8", "ignore")


def utf8_filter(p: BytePayload | bytes) -> BytePayload | bytes:
    """Keep every well-formed UTF-8 scalar, drop everything else byte by byte.

    Returns the same kind of object it was given.
    """
    if isinstance(p, BytePayload):
        return BytePayload(utf8_filter_text(p.data).encode("utf-8"), p.origin_tx)
    return utf8_filter_text(bytes(p)).encode("utf-8")
