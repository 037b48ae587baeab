from collections import Counter

import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chaincarve.exceptions import FormatError
from chaincarve.ien_graph import (
    IENGraph,
    build_ien,
    degree_stats,
    export_graph,
    histogram_csv,
    import_graph,
    loglog_histogram,
)

FORMATS = ["edgelist", "dot", "graphml"]


def rec(src, dst, cat="english"):
    return {"from": src, "to": dst, "category": cat}


def test_build_basic():
    g = build_ien([rec("A", "B"), rec("A", "B"), rec("A", "C")])
    assert g.nodes == {"A", "B", "C"}
    assert dict(g.edges) == {("A", "B"): 2, ("A", "C"): 1}


def test_self_loop():
    g = build_ien([rec("A", "A")])
    assert g.nodes == {"A"} and dict(g.edges) == {("A", "A"): 1}


def test_empty():
    g = build_ien([])
    assert not g.nodes and not g.edges
    s = degree_stats(g)
    assert s.fraction_embed_once == 0 and s.fraction_embed_lt6 == 0 and s.node_count == 0


def test_category_filter_and_skips():
    recs = [rec("A", "B", "file"), rec("A", "C", "link"), rec("A", None, "file"), {"to": "B", "category": "file"}]
    g = build_ien(recs, "file")
    assert dict(g.edges) == {("A", "B"): 1}
    assert g.skipped == Counter(contract_creation=1, missing_from=1)
    assert build_ien(recs, "all").total_weight == 2
    with pytest.raises(ValueError):
        build_ien(recs, "mail")


def test_build_from_objects():
    class R:
        from_addr, to_addr, kind = "0xa", "0xb", "chinese"
    assert dict(build_ien([R()], "chinese").edges) == {("0xa", "0xb"): 1}


def test_out_weight_single_sender():
    s = degree_stats(build_ien([rec("A", "B"), rec("A", "B"), rec("A", "C")]))
    assert s.top_k_out[0] == ("A", 3)
    assert s.fraction_embed_once == 0


def test_top_k():
    g = build_ien([rec("A", "B"), rec("A", "B"), rec("C", "B")])
    s = degree_stats(g, k=1)
    assert [a for a, _ in s.top_k_in] == ["B"] and [a for a, _ in s.top_k_out] == ["A"]


def test_top_k_ties_lexicographic():
    s = degree_stats(build_ien([rec("Z", "X"), rec("M", "X"), rec("B", "X")]), k=2)
    assert s.top_k_out == [("B", 1), ("M", 1)]


def sender_corpus(rng):
    recs = []
    weights = [1] * 77 + [rng.randint(2, 5) for _ in range(18)] + [rng.randint(6, 40) for _ in range(5)]
    for i, w in enumerate(weights):
        for _ in range(w):
            recs.append(rec(f"S{i:03d}", f"R{rng.randrange(30):02d}"))
    rng.shuffle(recs)
    return recs


def test_mirrored_fractions(rng):
    s = degree_stats(build_ien(sender_corpus(rng)))
    assert s.fraction_embed_once == 0.77
    assert s.fraction_embed_lt6 == 0.95


def test_order_independence(rng):
    recs = sender_corpus(rng)
    shuffled = recs[:]
    rng.shuffle(shuffled)
    assert build_ien(recs) == build_ien(shuffled)


def test_merge(rng):
    recs = sender_corpus(rng)
    half = len(recs) // 2
    assert build_ien(recs[:half]).merge(build_ien(recs[half:])) == build_ien(recs)


@settings(max_examples=100)
@given(st.lists(st.tuples(st.sampled_from("ABCDEF"), st.sampled_from("ABCDEF")), max_size=60))
def test_conservation(pairs):
    g = build_ien([rec(a, b) for a, b in pairs])
    assert g.total_weight == len(pairs)
    assert sum(g.out_weights().values()) == sum(g.in_weights().values()) == len(pairs)
    s = degree_stats(g)
    assert 0 <= s.fraction_embed_once <= s.fraction_embed_lt6 <= 1
    for (a, b) in g.edges:
        assert a in g.nodes and b in g.nodes


def test_edgelist_exact(tmp_path):
    g = build_ien([rec("A", "B"), rec("A", "B")])
    p = export_graph(g, "edgelist", tmp_path / "g.csv")
    assert p.read_bytes() == b"src,dst,weight\nA,B,2\n"
    assert export_graph(IENGraph(), "edgelist_csv", tmp_path / "e.csv").read_text() == "src,dst,weight\n"


def random_graph(rng, n_nodes=12, n_recs=40):
    nodes = ["0x" + rng.randbytes(20).hex() for _ in range(n_nodes)]
    return build_ien([rec(rng.choice(nodes), rng.choice(nodes)) for _ in range(n_recs)])


@pytest.mark.parametrize("fmt", FORMATS)
def test_round_trip(tmp_path, rng, fmt):
    for i in range(20):
        g = random_graph(rng)
        p = export_graph(g, fmt, tmp_path / f"g{i}.{fmt}")
        assert import_graph(p, fmt, "all") == g


@pytest.mark.parametrize("fmt", ["dot", "graphml"])
def test_round_trip_odd_names(tmp_path, fmt):
    g = build_ien([rec('a"b', "c\\d", "link"), rec("x y", "a\"b", "link")], "link")
    p = export_graph(g, fmt, tmp_path / "g")
    back = import_graph(p, fmt)
    assert back == g and back.category == "link"


def test_graphml_readable_by_networkx(tmp_path, rng):
    g = random_graph(rng)
    p = export_graph(g, "graphml", tmp_path / "g.graphml")
    nxg = nx.read_graphml(p)
    assert set(nxg.nodes) == g.nodes
    assert {(s, d): int(a["weight"]) for s, d, a in nxg.edges(data=True)} == dict(g.edges)


def test_dot_well_formed(tmp_path):
    text = export_graph(build_ien([rec("A", "B")]), "dot", tmp_path / "g.dot").read_text()
    assert text.startswith("digraph IEN {") and '"A" -> "B" [weight=1];' in text


def test_bad_imports(tmp_path):
    p = tmp_path / "g.csv"
    p.write_text("a,b\n")
    with pytest.raises(FormatError):
        import_graph(p, "edgelist")
    p.write_text("src,dst,weight\nA,B,0\n")
    with pytest.raises(FormatError):
        import_graph(p, "edgelist")
    p.write_text("<graphml")
    with pytest.raises(FormatError):
        import_graph(p, "graphml")
    with pytest.raises(ValueError):
        export_graph(IENGraph(), "gexf", tmp_path / "x")


def test_histograms():
    s = degree_stats(build_ien([rec("A", "B"), rec("A", "C"), rec("D", "B")]))
    assert s.out_hist == {2: 1, 0: 2, 1: 1}
    assert histogram_csv(s.out_hist) == "degree,count\n0,2\n1,1\n2,1\n"
    assert loglog_histogram({0: 3, 1: 10, 10: 1}) == [(0.0, 1.0), (1.0, 0.0)]
    assert s.to_json()["node_count"] == 4
