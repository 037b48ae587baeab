import json
import os
import stat
import sys

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chaincarve.exceptions import IoError, RegistryFormatError
from chaincarve.file_carve import (
    CarvedFile,
    FileCarver,
    carve_bytes,
    carve_file,
    load_registry,
    run_image_classifier,
    scan_payload,
    signature_registry,
    write_carved,
)
from helpers import CARVE_TYPES, embed, junk, make_fixture

PNG = bytes.fromhex("89504E470D0A1A0A")


def entry(t):
    return {e.file_type: e for e in signature_registry()}[t]


def test_registry_table_values():
    assert entry("png").header_variants[0] == PNG
    assert entry("pdf").header_variants[0] == bytes.fromhex("25504446")
    assert entry("gif").trailer_variants[0] == bytes.fromhex("003B")
    assert set(entry("jpg").header_variants) == {bytes.fromhex(h) for h in ("FFD8FFE0", "FFD8FFE1", "FFD8FFE8")}
    assert entry("html").header_variants[0] == b"html>"
    assert set(entry("zip").header_variants) == {bytes.fromhex(h) for h in ("504B0304", "504B4C495445", "57696E5A6970")}


def test_registry_added_trailers():
    assert entry("jpg").trailer_variants == (b"\xff\xd9",)
    assert entry("png").trailer_variants == (bytes.fromhex("49454E44AE426082"),)
    assert entry("pdf").trailer_variants == (b"%%EOF",)
    assert entry("html").trailer_variants == (b"</html>",)


def test_registry_extension(tmp_path):
    ext = tmp_path / "ext.json"
    ext.write_text(json.dumps([{"type": "7z", "headers": ["377ABCAF271C"], "trailers": []}]))
    reg = load_registry(ext)
    assert "7z" in reg.types() and "png" in reg.types()
    hits = scan_payload(b"xx7z\xbc\xaf\x27\x1c", reg)
    assert [(h.file_type, h.offset) for h in hits] == [("7z", 2)]


@pytest.mark.parametrize("content", [
    "{not json",
    json.dumps({"signatures": "nope"}),
    json.dumps([{"type": "x"}]),
    json.dumps([{"type": "x", "headers": ["zz"]}]),
    json.dumps([{"type": "x", "headers": ["01"]}]),  # 1-byte header
])
def test_registry_format_errors(tmp_path, content):
    ext = tmp_path / "bad.json"
    ext.write_text(content)
    with pytest.raises(RegistryFormatError):
        load_registry(ext)


def test_scan_finds_png_at_offset(rng):
    payload = junk(rng, 10) + PNG + bytes(20)
    assert [(h.file_type, h.offset, h.which) for h in scan_payload(payload)] == [("png", 10, "header")]


def test_scan_empty():
    assert scan_payload(b"") == []


def test_scan_reports_in_offset_order():
    payload = b"abc%PDF-1.4 stuff \x00\x3b more"
    hits = scan_payload(payload)
    assert [(h.file_type, h.which) for h in hits] == [("pdf", "header"), ("gif", "trailer")]
    assert hits[0].offset < hits[1].offset


def test_carve_gif_complete(rng):
    fixture = make_fixture("gif", rng)
    payload = junk(rng, 10) + fixture
    c = carve_file("0x" + payload.hex(), "0xabc")
    assert c.file_type == "gif" and c.completeness == "complete"
    assert c.data == fixture
    assert c.header_offset == 10
    assert c.source_txs == ("0xabc",)


def test_carve_png_truncated(rng):
    c = carve_bytes(PNG + rng.randbytes(100).replace(b"IEND", b"IENX"))
    assert c.file_type == "png" and c.completeness == "truncated"
    assert c.data.startswith(PNG) and len(c.data) == 108


def test_carve_zip_unknown():
    c = carve_bytes(b"junk" + b"PK\x03\x04rest")
    assert c.completeness == "unknown" and c.data == b"PK\x03\x04rest"


def test_carve_ascii_text_is_nothing():
    assert carve_file("0x" + b"just a friendly note, nothing else".hex()) is None


def test_html_starts_at_open_tag():
    payload = b"\x01\x02<html><body>x</body></html>\x05"
    c = carve_bytes(payload)
    assert c.data == b"<html><body>x</body></html>"
    assert c.completeness == "complete"


def test_html_marker_without_open_tag():
    c = carve_bytes(b"zzhtml>abc</html>")
    assert c.data == b"html>abc</html>"


def test_closing_tag_alone_is_not_a_header():
    assert carve_bytes(b"text </html> text") is None


@pytest.mark.parametrize("ftype", CARVE_TYPES)
def test_round_trip_per_type(ftype, rng):
    for _ in range(5):
        fixture = make_fixture(ftype, rng)
        payload, offset = embed(ftype, fixture, rng)
        c = carve_bytes(payload)
        assert c.data == fixture
        assert c.header_offset == offset
        assert c.completeness == ("unknown" if ftype == "zip" else "complete")


@settings(max_examples=200)
@given(st.binary(max_size=200))
def test_carve_none_iff_no_header(data):
    has_header = any(h.which == "header" for h in scan_payload(data))
    assert (carve_bytes(data) is None) == (not has_header)


@settings(max_examples=200)
@given(st.binary(max_size=100), st.binary(max_size=100), st.sampled_from(["png", "jpg", "pdf", "gif"]))
def test_earliest_header_rule(prefix, tail, later_type):
    base = prefix + PNG + tail
    first = carve_bytes(base)
    later = entry(later_type).header_variants[0]
    moved = carve_bytes(base + later)
    assert first is not None and moved is not None
    assert moved.header_offset == first.header_offset


def test_carved_file_invariants():
    with pytest.raises(ValueError):
        CarvedFile("png", PNG, "complete", (), 0)
    with pytest.raises(ValueError):
        CarvedFile("png", PNG, "done", ("0x1",), 0)


def test_write_carved_layout(tmp_path):
    c = CarvedFile("gif", b"GIF89a\x00;", "complete", ("0xabc",), 3)
    p = write_carved(c, tmp_path)
    assert p == tmp_path / "gif" / "0xabc.gif"
    assert p.read_bytes() == c.data
    meta = json.loads((tmp_path / "gif" / "0xabc.json").read_text())
    assert meta["completeness"] == "complete" and meta["source_txs"] == ["0xabc"]
    assert meta["header_offset"] == 3


def test_write_carved_collision(tmp_path):
    c = CarvedFile("gif", b"GIF89a\x00;", "complete", ("0xabc",), 0)
    write_carved(c, tmp_path)
    p2 = write_carved(c, tmp_path)
    assert p2.name == "0xabc-1.gif"
    assert (tmp_path / "gif" / "0xabc-1.json").exists()


@pytest.mark.skipif(os.geteuid() == 0 if hasattr(os, "geteuid") else True, reason="root ignores permissions")
def test_write_carved_unwritable(tmp_path):
    tmp_path.chmod(stat.S_IRUSR | stat.S_IXUSR)
    try:
        with pytest.raises(IoError):
            write_carved(CarvedFile("gif", b"GIF89a", "truncated", ("0x1",), 0), tmp_path)
    finally:
        tmp_path.chmod(stat.S_IRWXU)


def test_write_carved_path_is_a_file(tmp_path):
    blocker = tmp_path / "out"
    blocker.write_text("x")
    with pytest.raises(IoError):
        write_carved(CarvedFile("gif", b"GIF89a", "truncated", ("0x1",), 0), blocker)


def test_image_classifier_hook(tmp_path):
    script = tmp_path / "clf.py"
    script.write_text("#!" + sys.executable + "\nimport json, sys\nprint(json.dumps({'label': 'safe', 'score': 0.75, 'p': sys.argv[1]}))\n")
    script.chmod(0o755)
    assert run_image_classifier(str(script), tmp_path / "a.png") == {"label": "safe", "score": 0.75}


def test_image_classifier_bad_output(tmp_path):
    script = tmp_path / "clf.py"
    script.write_text("#!" + sys.executable + "\nprint('{\"label\": \"x\", \"score\": 7}')\n")
    script.chmod(0o755)
    assert "error" in run_image_classifier(str(script), "a.png")
    assert "error" in run_image_classifier(str(tmp_path / "missing"), "a.png")


def test_file_carver_estimator(rng):
    fixture = make_fixture("png", rng)
    out = FileCarver().fit().transform(["0x" + fixture.hex(), "0x" + b"plain".hex()])
    assert out[0].data == fixture and out[1] is None
