"""Exception hierarchy shared by every chaincarve module."""

from __future__ import annotations


class ChainCarveError(Exception):
    """Base class for all toolkit errors."""


# ingestion -----------------------------------------------------------------

class TransportError(ChainCarveError):
    """Network or HTTP failure while talking to a node."""


class AuthError(TransportError):
    """The endpoint rejected our credentials (HTTP 401/403)."""


class RpcError(ChainCarveError):
    def __init__(self, code: int | None, message: str):
        super().__init__(f"rpc error {code}: {message}")
        self.code = code
        self.message = message


class MissingBlock(ChainCarveError):
    def __init__(self, number: int):
        super().__init__(f"block {number} not available from node")
        self.number = number


class FormatError(ChainCarveError, ValueError):
    """Malformed record data. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class RangeFetchError(ChainCarveError):
    """Raised after a range fetch finished with unrecoverable blocks."""

    def __init__(self, report):
        failed = sorted(report.failures)
        super().__init__(f"{len(failed)} block(s) failed: {failed[:10]}")
        self.report = report


class IoError(ChainCarveError, OSError):
    pass


# codec ---------------------------------------------------------------------

class HexDecodeError(ChainCarveError, ValueError):
    pass


class OddLength(HexDecodeError):
    def __init__(self, length: int):
        super().__init__(f"hex string has odd length {length}")
        self.length = length


class NonHexCharacter(HexDecodeError):
    def __init__(self, offset: int, char: str):
        super().__init__(f"non-hex character {char!r} at offset {offset}")
        self.offset = offset
        self.char = char


# text restoration ----------------------------------------------------------

class Unclassifiable(ChainCarveError):
    """Text matched none of the four content kinds."""


# file carving --------------------------------------------------------------

class RegistryFormatError(ChainCarveError, ValueError):
    pass


# sentiment -----------------------------------------------------------------

class EmptyText(ChainCarveError, ValueError):
    pass


class EmptyCorpus(ChainCarveError, ValueError):
    pass


class MissingLabel(ChainCarveError, ValueError):
    pass


class EmptySet(ChainCarveError, ValueError):
    pass


class VersionMismatch(ChainCarveError):
    pass


class CorruptModel(ChainCarveError):
    pass


# reporting -----------------------------------------------------------------

class MissingTimestamp(ChainCarveError, ValueError):
    pass
