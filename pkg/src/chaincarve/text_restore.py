"""Text restoration: hex payload -> filtered UTF-8 -> categorized text."""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from sklearn.base import BaseEstimator, TransformerMixin

from .codec import hex_decode, utf8_filter_text
from .exceptions import Unclassifiable

__all__ = [
    "KINDS",
    "RestorePolicy",
    "RestoredText",
    "restore_text",
    "classify_kind",
    "dedupe_stream",
    "DedupeCounts",
    "TextRestorer",
]

KINDS = ("chinese", "english", "email", "link")
DEFAULT_LINK_TLDS = ("com", "io", "app", "org", "net", "onion")

# U+4E00..U+9FFF, CJK Unified Ideographs
_CJK = re.compile("[一-鿿]")
# Only existence matters, so the patterns anchor on the literal "@" / "." and
# look behind for the one local-part / label character a full match needs.
_EMAIL = re.compile(r"(?<=[A-Za-z0-9._%+-])@(?:[A-Za-z0-9-]+\.)+[A-Za-z]{2,}")
_URL_SCHEME = re.compile(r"https?://", re.IGNORECASE)
# C0/C1 controls except TAB, LF, CR
_STRAY_CONTROL = re.compile("[\x01-\x08\x0b\x0c\x0e-\x1f\x7f-\x9f]")
_ANY_CONTROL = re.compile("[\x00-\x08\x0b\x0c\x0e-\x1f\x7f-\x9f]")
# ASCII letters, digits, space and punctuation; counted with bytes.translate
_ENGLISH_BYTES = bytes(range(0x20, 0x7F))
_WORD_BYTES = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789 \t\n\r\x0b\x0c"


@dataclass(frozen=True)
class RestorePolicy:
    """Quality gates for restored text.

    ``max_control_ratio`` and ``min_word_ratio`` reject random bytes that
    happen to survive the UTF-8 filter: roughly half of all byte values are
    ASCII, so length and keep-ratio alone admit most random payloads.
    """

    min_chars: int = 8
    min_keep_ratio: float = 0.25
    chinese_char_threshold: int = 2
    dedupe: bool = False
    max_control_ratio: float = 0.05
    min_word_ratio: float = 0.75
    link_tlds: tuple[str, ...] = DEFAULT_LINK_TLDS

    def __post_init__(self):
        if self.min_chars < 1 or self.chinese_char_threshold < 1:
            raise ValueError("min_chars and chinese_char_threshold must be positive")
        for name in ("min_keep_ratio", "max_control_ratio", "min_word_ratio"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        object.__setattr__(self, "_link_re", _link_pattern(self.link_tlds))


def _link_pattern(tlds: Iterable[str]) -> re.Pattern:
    alt = "|".join(sorted((re.escape(t.lstrip(".").lower()) for t in tlds), key=len, reverse=True))
    return re.compile(
        rf"(?<=[A-Za-z0-9-])\.(?:{alt})(?![A-Za-z0-9])", re.IGNORECASE
    )


@dataclass(frozen=True)
class RestoredText:
    origin_tx: str | None
    text: str
    kind: str
    char_count: int
    keep_ratio: float
    block_number: int | None = None
    from_addr: str | None = None
    to_addr: str | None = None
    block_timestamp: int | None = None

    def to_json(self) -> dict:
        return {
            "tx": self.origin_tx,
            "block": self.block_number,
            "from": self.from_addr,
            "to": self.to_addr,
            "kind": self.kind,
            "text": self.text,
            "keep_ratio": self.keep_ratio,
            "timestamp": self.block_timestamp,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RestoredText":
        return cls(
            origin_tx=obj["tx"],
            text=obj["text"],
            kind=obj["kind"],
            char_count=len(obj["text"]),
            keep_ratio=obj["keep_ratio"],
            block_number=obj.get("block"),
            from_addr=obj.get("from"),
            to_addr=obj.get("to"),
            block_timestamp=obj.get("timestamp"),
        )


DEFAULT_POLICY = RestorePolicy()


def classify_kind(text: str, policy: RestorePolicy = DEFAULT_POLICY) -> str:
    """Primary kind of ``text``: email > link > chinese > english.

    Raises :class:`Unclassifiable` when none applies.
    """
    if not text:
        raise ValueError("text must be non-empty")
    # the substring checks are cheap guards; the regexes cannot match without them
    if "@" in text and _EMAIL.search(text):
        return "email"
    if ("://" in text and _URL_SCHEME.search(text)) or ("." in text and policy._link_re.search(text)):
        return "link"
    if len(_CJK.findall(text)) >= policy.chinese_char_threshold:
        return "chinese"
    n = len(text)
    if _count_bytes(text, _ENGLISH_BYTES) * 2 >= n and _count_bytes(text, _WORD_BYTES) >= policy.min_word_ratio * n:
        return "english"
    raise Unclassifiable(text[:40])


def _count_bytes(text: str, members: bytes) -> int:
    """Characters of ``text`` drawn from the ASCII set ``members``."""
    raw = text.encode("utf-8")  # non-ASCII characters encode to bytes >= 0x80 only
    return len(raw) - len(raw.translate(None, members))


def _clean(filtered: str) -> str:
    return _ANY_CONTROL.sub("", filtered).strip()


def restore_text(
    input_hex: str,
    policy: RestorePolicy = DEFAULT_POLICY,
    *,
    origin_tx: str | None = None,
    block_number: int | None = None,
    from_addr: str | None = None,
    to_addr: str | None = None,
    block_timestamp: int | None = None,
) -> RestoredText | None:
    """Restore readable text from a hex payload, or ``None`` when gated out.

    Codec errors propagate. Unclassifiable text also yields ``None``; use
    :class:`TextRestorer` when the reasons for rejection need counting.
    """
    try:
        return _restore(input_hex, policy, origin_tx, block_number, from_addr, to_addr, block_timestamp)
    except _Rejected:
        return None


class _Rejected(Exception):
    def __init__(self, reason: str):
        self.reason = reason


def _restore(input_hex, policy, origin_tx, block_number, from_addr, to_addr, block_timestamp):
    raw = hex_decode(input_hex).data
    if not raw:
        raise _Rejected("empty")
    decoded = utf8_filter_text(raw)
    keep_ratio = len(decoded.encode("utf-8")) / len(raw)
    if decoded and len(_STRAY_CONTROL.findall(decoded)) > policy.max_control_ratio * len(decoded):
        raise _Rejected("gibberish")
    text = _clean(decoded)
    if len(text) < policy.min_chars:
        raise _Rejected("too_short")
    if keep_ratio < policy.min_keep_ratio:
        raise _Rejected("low_keep_ratio")
    try:
        kind = classify_kind(text, policy)
    except Unclassifiable:
        raise _Rejected("unclassifiable") from None
    return RestoredText(
        origin_tx=origin_tx,
        text=text,
        kind=kind,
        char_count=len(text),
        keep_ratio=keep_ratio,
        block_number=block_number,
        from_addr=from_addr,
        to_addr=to_addr,
        block_timestamp=block_timestamp,
    )


@dataclass
class DedupeCounts:
    """Occurrence counts keyed by the SHA-256 of the text."""

    counts: Counter = field(default_factory=Counter)

    def __getitem__(self, text: str) -> int:
        return self.counts[content_hash(text)]


def content_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def dedupe_stream(
    texts: Iterable[RestoredText], dedupe: bool = True, counts: DedupeCounts | None = None
) -> Iterator[RestoredText]:
    """Fold exact duplicates into ``counts``; only first occurrences are yielded.

    With ``dedupe=False`` every text passes through (still counted).
    """
    if counts is None:
        counts = DedupeCounts()
    for t in texts:
        key = content_hash(t.text)
        seen = key in counts.counts
        counts.counts[key] += 1
        if not dedupe or not seen:
            yield t


class TextRestorer(TransformerMixin, BaseEstimator):
    """Estimator wrapper over :func:`restore_text`.

    ``transform`` takes a sequence of hex strings (or TxRecord-like objects
    carrying ``input_hex``) and returns a list aligned with the input, holding
    a :class:`RestoredText` or ``None``. Rejection reasons accumulate in
    ``rejected_``.
    """

    def __init__(self, min_chars=8, min_keep_ratio=0.25, chinese_char_threshold=2,
                 dedupe=False, max_control_ratio=0.05, min_word_ratio=0.75,
                 link_tlds=DEFAULT_LINK_TLDS):
        self.min_chars = min_chars
        self.min_keep_ratio = min_keep_ratio
        self.chinese_char_threshold = chinese_char_threshold
        self.dedupe = dedupe
        self.max_control_ratio = max_control_ratio
        self.min_word_ratio = min_word_ratio
        self.link_tlds = link_tlds

    def fit(self, X=None, y=None):
        self.policy_ = RestorePolicy(
            min_chars=self.min_chars,
            min_keep_ratio=self.min_keep_ratio,
            chinese_char_threshold=self.chinese_char_threshold,
            dedupe=self.dedupe,
            max_control_ratio=self.max_control_ratio,
            min_word_ratio=self.min_word_ratio,
            link_tlds=tuple(self.link_tlds),
        )
        self.rejected_ = Counter()
        return self

    def transform(self, X):
        if not hasattr(self, "policy_"):
            self.fit()
        out = []
        for item in X:
            if isinstance(item, str):
                meta = {}
                hx = item
            else:
                hx = item.input_hex
                meta = dict(
                    origin_tx=item.tx_hash,
                    block_number=item.block_number,
                    from_addr=item.from_addr,
                    to_addr=item.to_addr,
                    block_timestamp=item.block_timestamp,
                )
            try:
                out.append(_restore(hx, self.policy_, **{**_EMPTY_META, **meta}))
            except _Rejected as r:
                self.rejected_[r.reason] += 1
                out.append(None)
        return out


_EMPTY_META = dict(origin_tx=None, block_number=None, from_addr=None, to_addr=None, block_timestamp=None)
