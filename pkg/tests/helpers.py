"""Fixture builders shared by the test modules."""

from __future__ import annotations

import io
import random
import zipfile

from PIL import Image

from chaincarve.file_carve import load_registry, scan_payload
from chaincarve.ingest import TxRecord

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_RESULTS: list[str] = []

CARVE_TYPES = ("png", "jpg", "gif", "html", "zip", "pdf")
TRAILERS = {
    "png": b"IEND\xaeB`\x82",
    "jpg": b"\xff\xd9",
    "gif": b"\x00\x3b",
    "html": b"</html>",
    "pdf": b"%%EOF",
}


def oracle_filter(data: bytes) -> bytes:
    """Greedy scan using the stdlib strict decoder to validate one scalar at a time."""
    out = bytearray()
    i = 0
    while i < len(data):
        for n in range(1, 5):
            try:
                data[i:i + n].decode("utf-8", "strict")
            except UnicodeDecodeError:
                continue
            out += data[i:i + n]
            i += n
            break
        else:
            i += 1
    return bytes(out)


def rand_hex(rng: random.Random, nbytes: int) -> str:
    return "0x" + rng.randbytes(nbytes).hex()


def _image(rng: random.Random) -> Image.Image:
    w, h = rng.randint(4, 24), rng.randint(4, 24)
    img = Image.new("RGB", (w, h))
    img.putdata([(rng.randrange(256), rng.randrange(256), rng.randrange(256)) for _ in range(w * h)])
    return img


def _encode(img: Image.Image, fmt: str, **kw) -> bytes:
    buf = io.BytesIO()
    img.save(buf, fmt, **kw)
    return buf.getvalue()


def _raw_fixture(ftype: str, rng: random.Random) -> bytes:
    if ftype == "png":
        return _encode(_image(rng), "PNG")
    if ftype == "jpg":
        return _encode(_image(rng), "JPEG", quality=rng.randint(60, 95))
    if ftype == "gif":
        return _encode(_image(rng).convert("P", palette=Image.Palette.ADAPTIVE, colors=16), "GIF")
    if ftype == "pdf":
        data = _encode(_image(rng), "PDF")
        return data[: data.rindex(b"%%EOF") + 5]
    if ftype == "html":
        words = " ".join(rng.choice(["block", "chain", "data", "embed", "ether"]) for _ in range(rng.randint(3, 30)))
        return f"<html><head><title>t{rng.randrange(1000)}</title></head><body><p>{words}</p></body></html>".encode()
    if ftype == "zip":
        buf = io.BytesIO()
        with zipfile.ZipFile(buf, "w") as zf:
            zf.writestr(f"note{rng.randrange(100)}.txt", rng.randbytes(rng.randint(10, 200)))
        return buf.getvalue()
    raise ValueError(ftype)


def clean_fixture(ftype: str, data: bytes) -> bool:
    """True when the earliest-header / earliest-trailer carve recovers ``data`` exactly."""
    hits = scan_payload(data)
    headers = [h for h in hits if h.which == "header"]
    if not headers or headers[0].file_type != ftype:
        return False
    start = 0 if ftype == "html" else headers[0].offset
    if start != 0:
        return False
    if ftype in TRAILERS:
        t = TRAILERS[ftype]
        return data.find(t, headers[0].offset + headers[0].length) == len(data) - len(t)
    return True


def make_fixture(ftype: str, rng: random.Random) -> bytes:
    for _ in range(200):
        data = _raw_fixture(ftype, rng)
        if clean_fixture(ftype, data):
            return data
    raise RuntimeError(f"could not build a clean {ftype} fixture")


def junk(rng: random.Random, n: int) -> bytes:
    """Random bytes containing no registered signature."""
    while True:
        b = rng.randbytes(n)
        if not scan_payload(b):
            return b


def embed(ftype: str, fixture: bytes, rng: random.Random, max_junk: int = 64) -> tuple[bytes, int]:
    """Wrap ``fixture`` in junk; trailerless types only get leading junk."""
    registry = load_registry()
    has_trailer = bool(registry.entry(ftype).trailer_variants)
    while True:
        pre = junk(rng, rng.randint(0, max_junk))
        post = junk(rng, rng.randint(0, max_junk)) if has_trailer else b""
        payload = pre + fixture + post
        hits = [h for h in scan_payload(payload) if h.which == "header"]
        if hits and hits[0].file_type == ftype and hits[0].offset >= len(pre) and (
            ftype == "html" or hits[0].offset == len(pre)
        ):
            return payload, len(pre)


def make_tx(rng: random.Random, block: int, idx: int, sender: str, payload: bytes,
            to: str | None = "0x" + "22" * 20, timestamp: int = 1_500_000_000) -> TxRecord:
    return TxRecord(
        block_number=block,
        tx_index=idx,
        tx_hash=rand_hex(rng, 32),
        from_addr=sender,
        to_addr=to,
        value=0,
        input_hex="0x" + payload.hex(),
        block_timestamp=timestamp,
    )


def abi_wrap(chunk: bytes, selector: bytes = bytes.fromhex("a9059cbb")) -> bytes:
    """``uploadData(bytes)``-style calldata around ``chunk``."""
    pad = (-len(chunk)) % 32
    return selector + (32).to_bytes(32, "big") + len(chunk).to_bytes(32, "big") + chunk + b"\x00" * pad


def split_points(rng: random.Random, size: int, parts: int, first_min: int) -> list[int]:
    cuts = sorted(rng.sample(range(first_min, size - 1), parts - 1))
    return [0, *cuts, size]


def sentiment_corpus(rng: random.Random, per_label: int, labels=("neutral", "positive", "negative")):
    """Separable corpus: class tokens are disjoint, filler words are shared."""
    vocab = {l: [f"{l[:3]}{i}" for i in range(40)] for l in labels}
    shared = [f"word{i}" for i in range(20)]
    out = []
    for _ in range(per_label):
        for l in labels:
            n = rng.randint(5, 15)
            toks = [rng.choice(vocab[l]) if rng.random() < 0.6 else rng.choice(shared) for _ in range(n)]
            toks[rng.randrange(n)] = rng.choice(vocab[l])  # every doc carries a class token
            out.append((" ".join(toks), l))
    return out
