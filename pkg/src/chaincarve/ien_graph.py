"""Information embedding network: who embeds content into whose transactions."""

from __future__ import annotations

import csv
import io
import math
import re
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .exceptions import FormatError, IoError

__all__ = [
    "CATEGORIES",
    "IENGraph",
    "DegreeStats",
    "build_ien",
    "degree_stats",
    "export_graph",
    "import_graph",
    "histogram_csv",
    "loglog_histogram",
]

CATEGORIES = ("file", "link", "chinese", "english", "all")
FORMATS = ("edgelist_csv", "dot", "graphml")
_FORMAT_ALIASES = {"edgelist": "edgelist_csv", "csv": "edgelist_csv"}
_GRAPHML_NS = "http://graphml.graphdrawing.org/xmlns"


@dataclass
class IENGraph:
    category: str = "all"
    nodes: set[str] = field(default_factory=set)
    edges: Counter = field(default_factory=Counter)  # (src, dst) -> weight
    skipped: Counter = field(default_factory=Counter)

    def add(self, src: str, dst: str, weight: int = 1) -> None:
        if weight < 1:
            raise ValueError("edge weights must be >= 1")
        self.nodes.add(src)
        self.nodes.add(dst)
        self.edges[(src, dst)] += weight

    def merge(self, other: "IENGraph") -> "IENGraph":
        out = IENGraph(self.category, set(self.nodes), Counter(self.edges), Counter(self.skipped))
        out.nodes |= other.nodes
        out.edges.update(other.edges)
        out.skipped.update(other.skipped)
        return out

    @property
    def total_weight(self) -> int:
        return sum(self.edges.values())

    def out_weights(self) -> Counter:
        c = Counter()
        for (s, _), w in self.edges.items():
            c[s] += w
        return c

    def in_weights(self) -> Counter:
        c = Counter()
        for (_, d), w in self.edges.items():
            c[d] += w
        return c

    def __eq__(self, other) -> bool:
        if not isinstance(other, IENGraph):
            return NotImplemented
        return (self.category == other.category and self.nodes == other.nodes
                and dict(self.edges) == dict(other.edges))


def _category_of(rec) -> str | None:
    if isinstance(rec, Mapping):
        return rec.get("category") or rec.get("kind")
    return getattr(rec, "category", None) or getattr(rec, "kind", None)


def _field(rec, *names):
    for n in names:
        v = rec.get(n) if isinstance(rec, Mapping) else getattr(rec, n, None)
        if v is not None:
            return v
    return None


def build_ien(records: Iterable, category: str = "all") -> IENGraph:
    """One edge increment per embedding record ``from -> to`` in ``category``.

    Records may be mappings or objects exposing ``from``/``from_addr``,
    ``to``/``to_addr`` and ``category`` (or ``kind``). Records without a
    recipient are skipped and tallied in ``graph.skipped``.
    """
    if category not in CATEGORIES:
        raise ValueError(f"category must be one of {CATEGORIES}")
    g = IENGraph(category)
    for rec in records:
        cat = _category_of(rec)
        if category != "all" and cat != category:
            continue
        src = _field(rec, "from_addr", "from")
        dst = _field(rec, "to_addr", "to")
        if src is None:
            g.skipped["missing_from"] += 1
            continue
        if dst is None:
            g.skipped["contract_creation"] += 1
            continue
        g.add(src, dst)
    return g


@dataclass
class DegreeStats:
    in_hist: dict[int, int]
    out_hist: dict[int, int]
    total_hist: dict[int, int]
    fraction_embed_once: float
    fraction_embed_lt6: float
    top_k_in: list[tuple[str, int]]
    top_k_out: list[tuple[str, int]]
    node_count: int
    edge_count: int

    def to_json(self) -> dict:
        return {
            "node_count": self.node_count,
            "edge_count": self.edge_count,
            "fraction_embed_once": self.fraction_embed_once,
            "fraction_embed_lt6": self.fraction_embed_lt6,
            "top_k_in": [[a, w] for a, w in self.top_k_in],
            "top_k_out": [[a, w] for a, w in self.top_k_out],
            "in_hist": {str(k): v for k, v in sorted(self.in_hist.items())},
            "out_hist": {str(k): v for k, v in sorted(self.out_hist.items())},
            "total_hist": {str(k): v for k, v in sorted(self.total_hist.items())},
        }


def _ranked(weights: Counter, k: int) -> list[tuple[str, int]]:
    return sorted(weights.items(), key=lambda kv: (-kv[1], kv[0]))[:k]


def degree_stats(g: IENGraph, k: int = 10) -> DegreeStats:
    """Weighted degree statistics; senders are nodes with out-weight >= 1."""
    if k < 1:
        raise ValueError("k must be positive")
    out_w = g.out_weights()
    in_w = g.in_weights()
    total = Counter()
    for n in g.nodes:
        total[n] = out_w[n] + in_w[n]
    senders = [w for w in out_w.values() if w >= 1]
    once = sum(1 for w in senders if w == 1)
    lt6 = sum(1 for w in senders if w < 6)
    return DegreeStats(
        in_hist=dict(Counter(in_w[n] for n in g.nodes)),
        out_hist=dict(Counter(out_w[n] for n in g.nodes)),
        total_hist=dict(Counter(total.values())),
        fraction_embed_once=once / len(senders) if senders else 0.0,
        fraction_embed_lt6=lt6 / len(senders) if senders else 0.0,
        top_k_in=_ranked(in_w, k),
        top_k_out=_ranked(out_w, k),
        node_count=len(g.nodes),
        edge_count=len(g.edges),
    )


def histogram_csv(hist: Mapping[int, int]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["degree", "count"])
    for deg in sorted(hist):
        w.writerow([deg, hist[deg]])
    return buf.getvalue()


def loglog_histogram(hist: Mapping[int, int]) -> list[tuple[float, float]]:
    """``(log10 degree, log10 count)`` for every positive degree."""
    return [(math.log10(d), math.log10(c)) for d, c in sorted(hist.items()) if d > 0 and c > 0]


# ------------------------------------------------------------------- export

def _edgelist(g: IENGraph) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["src", "dst", "weight"])
    for (s, d) in sorted(g.edges):
        w.writerow([s, d, g.edges[(s, d)]])
    return buf.getvalue()


def _dot_quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _dot(g: IENGraph) -> str:
    lines = ["digraph IEN {", f"  graph [category={_dot_quote(g.category)}];"]
    for n in sorted(g.nodes):
        lines.append(f"  {_dot_quote(n)};")
    for (s, d) in sorted(g.edges):
        lines.append(f"  {_dot_quote(s)} -> {_dot_quote(d)} [weight={g.edges[(s, d)]}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _graphml(g: IENGraph) -> str:
    ET.register_namespace("", _GRAPHML_NS)
    root = ET.Element(f"{{{_GRAPHML_NS}}}graphml")
    ET.SubElement(root, f"{{{_GRAPHML_NS}}}key", id="category", attrib={"for": "graph", "attr.name": "category", "attr.type": "string"})
    ET.SubElement(root, f"{{{_GRAPHML_NS}}}key", id="weight", attrib={"for": "edge", "attr.name": "weight", "attr.type": "long"})
    graph = ET.SubElement(root, f"{{{_GRAPHML_NS}}}graph", id="IEN", edgedefault="directed")
    ET.SubElement(graph, f"{{{_GRAPHML_NS}}}data", key="category").text = g.category
    for n in sorted(g.nodes):
        ET.SubElement(graph, f"{{{_GRAPHML_NS}}}node", id=n)
    for (s, d) in sorted(g.edges):
        e = ET.SubElement(graph, f"{{{_GRAPHML_NS}}}edge", source=s, target=d)
        ET.SubElement(e, f"{{{_GRAPHML_NS}}}data", key="weight").text = str(g.edges[(s, d)])
    ET.indent(root)
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(root, encoding="unicode") + "\n"


_WRITERS = {"edgelist_csv": _edgelist, "dot": _dot, "graphml": _graphml}


def _fmt(format: str) -> str:
    f = _FORMAT_ALIASES.get(format, format)
    if f not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}")
    return f


def export_graph(g: IENGraph, format: str, path: str | Path) -> Path:
    path = Path(path)
    text = _WRITERS[_fmt(format)](g)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc
    return path


# ------------------------------------------------------------------- import

_DOT_ID = r'"((?:[^"\\]|\\.)*)"'
_DOT_EDGE = re.compile(rf"^\s*{_DOT_ID}\s*->\s*{_DOT_ID}\s*\[weight=(\d+)\];\s*$")
_DOT_NODE = re.compile(rf"^\s*{_DOT_ID}\s*;\s*$")
_DOT_CAT = re.compile(rf"^\s*graph\s*\[category={_DOT_ID}\];\s*$")


def _dot_unquote(s: str) -> str:
    return re.sub(r"\\(.)", r"\1", s)


def _parse_edgelist(text: str, category: str) -> IENGraph:
    g = IENGraph(category)
    rows = csv.reader(io.StringIO(text))
    header = next(rows, None)
    if header != ["src", "dst", "weight"]:
        raise FormatError(f"bad edgelist header {header}", 1)
    for lineno, row in enumerate(rows, 2):
        if len(row) != 3 or not row[2].isdigit() or int(row[2]) < 1:
            raise FormatError(f"bad edgelist row {row}", lineno)
        g.add(row[0], row[1], int(row[2]))
    return g


def _parse_dot(text: str, category: str) -> IENGraph:
    g = IENGraph(category)
    for lineno, line in enumerate(text.splitlines(), 1):
        if m := _DOT_EDGE.match(line):
            g.add(_dot_unquote(m.group(1)), _dot_unquote(m.group(2)), int(m.group(3)))
        elif m := _DOT_NODE.match(line):
            g.nodes.add(_dot_unquote(m.group(1)))
        elif m := _DOT_CAT.match(line):
            g.category = _dot_unquote(m.group(1))
        elif line.strip() not in ("digraph IEN {", "}", ""):
            raise FormatError(f"unrecognized DOT line {line!r}", lineno)
    return g


def _parse_graphml(text: str, category: str) -> IENGraph:
    ns = {"g": _GRAPHML_NS}
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise FormatError(f"invalid GraphML: {exc}") from None
    graph = root.find("g:graph", ns)
    if graph is None:
        raise FormatError("GraphML document has no graph element")
    g = IENGraph(category)
    cat = graph.find("g:data[@key='category']", ns)
    if cat is not None and cat.text:
        g.category = cat.text
    for node in graph.findall("g:node", ns):
        g.nodes.add(node.get("id"))
    for edge in graph.findall("g:edge", ns):
        w = edge.find("g:data[@key='weight']", ns)
        g.add(edge.get("source"), edge.get("target"), int(w.text) if w is not None else 1)
    return g


_READERS = {"edgelist_csv": _parse_edgelist, "dot": _parse_dot, "graphml": _parse_graphml}


def import_graph(path: str | Path, format: str, category: str = "all") -> IENGraph:
    """Inverse of :func:`export_graph`. CSV carries no category, so pass it."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc
    return _READERS[_fmt(format)](text, category)
