import warnings

import pytest

from chaincarve.codec import BytePayload
from chaincarve.exceptions import ChainCarveError
from chaincarve.ingest import RecordStore
from chaincarve.split_reassembly import (
    ReassemblyJob,
    WindowIncomplete,
    extract_chunk,
    find_candidates,
    reassemble,
    reassemble_record,
)
from helpers import abi_wrap, make_fixture, make_tx, split_points

ALICE = "0x" + "aa" * 20
BOB = "0x" + "bb" * 20
START = 1_000_000


def split_txs(rng, fixture, parts=5, wrap=False, sender=ALICE, gap=10):
    cuts = split_points(rng, len(fixture), parts, 16)
    txs = []
    for i in range(parts):
        chunk = fixture[cuts[i]:cuts[i + 1]]
        txs.append(make_tx(rng, START + i * gap, 0, sender, abi_wrap(chunk) if wrap else chunk))
    return txs


def store_with_tail(txs):
    """Store whose last block covers the default window so no warning fires."""
    import random
    tail = make_tx(random.Random(0), START + 7000, 0, BOB, b"x")
    return RecordStore([*txs, tail])


def test_window_boundaries(rng):
    start = make_tx(rng, START, 0, ALICE, b"GIF89a")
    inside = make_tx(rng, START + 6700, 0, ALICE, b"x")
    outside = make_tx(rng, START + 6701, 0, ALICE, b"x")
    same_block = make_tx(rng, START, 1, ALICE, b"x")
    other = make_tx(rng, START + 5, 0, BOB, b"x")
    empty = make_tx(rng, START + 6, 0, ALICE, b"")
    cands = find_candidates(ReassemblyJob(start), [start, inside, outside, same_block, other, empty])
    assert [c.tx_hash for c in cands] == [inside.tx_hash]


def test_window_incomplete_warns(rng):
    start = make_tx(rng, START, 0, ALICE, b"GIF89a")
    with pytest.warns(WindowIncomplete):
        find_candidates(ReassemblyJob(start), [start])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        find_candidates(ReassemblyJob(start, window_blocks=10), [start, make_tx(rng, START + 10, 0, BOB, b"x")])


def test_job_validation(rng):
    start = make_tx(rng, START, 0, ALICE, b"GIF89a")
    with pytest.raises(ValueError):
        ReassemblyJob(start, window_blocks=0)
    with pytest.raises(ValueError):
        ReassemblyJob(start, chunk_mode="zip")


def test_extract_chunk_abi():
    p = BytePayload(abi_wrap(b"0123"))
    assert extract_chunk(p, "abi_bytes") == (b"0123", False)
    assert extract_chunk(p, "raw") == (p.data, False)


def test_extract_chunk_abi_fallback():
    short = b"\x01\x02\x03\x04" + b"\x00" * 10
    assert extract_chunk(short, "abi_bytes") == (short, True)
    bad_offset = bytes(4) + (64).to_bytes(32, "big") + (4).to_bytes(32, "big") + b"abcd" + bytes(28)
    assert extract_chunk(bad_offset, "abi_bytes") == (bad_offset, True)
    extra_word = abi_wrap(b"abcd") + bytes(32)
    assert extract_chunk(extra_word, "abi_bytes") == (extra_word, True)
    with pytest.raises(ValueError):
        extract_chunk(b"", "hex")


def test_abi_exact_word_length():
    data = bytes(range(64))
    assert extract_chunk(abi_wrap(data), "abi_bytes") == (data, False)


@pytest.mark.parametrize("ftype", ["gif", "png"])
def test_raw_five_chunks(ftype, rng):
    fixture = make_fixture(ftype, rng)
    txs = split_txs(rng, fixture)
    out = reassemble_record(txs[0], store_with_tail(txs))
    assert out.completeness == "complete"
    assert out.data == fixture
    assert out.source_txs == tuple(t.tx_hash for t in txs)
    assert [c.offset for c in out.chunks] == sorted(c.offset for c in out.chunks)


@pytest.mark.parametrize("ftype", ["gif", "png"])
def test_abi_mode(ftype, rng):
    fixture = make_fixture(ftype, rng)
    txs = split_txs(rng, fixture, wrap=True)
    store = store_with_tail(txs)
    out = reassemble_record(txs[0], store, chunk_mode="abi_bytes")
    assert out.data == fixture and out.completeness == "complete"
    assert not any(c.fallback for c in out.chunks)
    raw = reassemble_record(txs[0], store, chunk_mode="raw")
    assert raw.data != fixture


def test_stops_at_trailer(rng):
    fixture = make_fixture("gif", rng)
    txs = split_txs(rng, fixture)
    extra = make_tx(rng, START + 100, 0, ALICE, b"trailing junk")
    out = reassemble_record(txs[0], store_with_tail([*txs, extra]))
    assert out.data == fixture
    assert extra.tx_hash not in out.source_txs


def test_last_chunk_beyond_window_truncates(rng):
    fixture = make_fixture("png", rng)
    txs = split_txs(rng, fixture, parts=3, gap=4000)
    out = reassemble_record(txs[0], store_with_tail(txs))
    assert out.completeness == "truncated"
    assert fixture.startswith(out.data)


def test_candidate_order_does_not_matter(rng):
    fixture = make_fixture("gif", rng)
    txs = split_txs(rng, fixture)
    job = ReassemblyJob(txs[0])
    a = reassemble(job, txs[1:])
    b = reassemble(job, list(reversed(txs[1:])))
    assert a.data == b.data == fixture


def test_start_without_header(rng):
    start = make_tx(rng, START, 0, ALICE, b"nothing to see")
    with pytest.raises(ChainCarveError):
        reassemble(ReassemblyJob(start), [])


def test_trailerless_type_is_unknown(rng):
    start = make_tx(rng, START, 0, ALICE, b"PK\x03\x04abc")
    follow = make_tx(rng, START + 1, 0, ALICE, b"def")
    out = reassemble(ReassemblyJob(start), [follow])
    assert out.completeness == "unknown"
    assert out.data == b"PK\x03\x04abcdef"


def test_trailer_split_across_chunks(rng):
    fixture = make_fixture("png", rng)
    cut = len(fixture) - 4
    txs = [make_tx(rng, START, 0, ALICE, fixture[:cut]), make_tx(rng, START + 1, 0, ALICE, fixture[cut:])]
    out = reassemble(ReassemblyJob(txs[0]), txs[1:])
    assert out.data == fixture and out.completeness == "complete"
