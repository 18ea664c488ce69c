"""Interned directed labeled multigraph and an N-Triples subset reader/writer.

Nodes and predicates are interned to dense integer ids in first-seen order.
Triples form a set; per-(node, predicate) forward and reverse indexes give
constant-time neighbor lookups.
"""
from __future__ import annotations

import io
import re
from collections import defaultdict
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator

import numpy as np

RDF = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
RDFS = "http://www.w3.org/2000/01/rdf-schema#"
OWL = "http://www.w3.org/2002/07/owl#"
SKOS = "http://www.w3.org/2004/02/skos/core#"

INVERSE_SUFFIX = "#inv"


@dataclass(frozen=True)
class Vocabulary:
    """Well-known IRIs used for schema extraction. Override to match other data."""

    type: str = RDF + "type"
    subclass_of: str = RDFS + "subClassOf"
    subproperty_of: str = RDFS + "subPropertyOf"
    inverse_of: str = OWL + "inverseOf"
    symmetric_property: str = OWL + "SymmetricProperty"
    same_as: str = OWL + "sameAs"


DEFAULT_VOCABULARY = Vocabulary()


class NTriplesError(ValueError):
    def __init__(self, message: str, line: int, column: int = 0):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass
class ParseStats:
    lines: int = 0
    triples_read: int = 0
    duplicates: int = 0
    literals_dropped: int = 0


class KnowledgeGraph:
    """Directed labeled multigraph over interned IRIs.

    Construction and mutation require exclusive access; once built a graph can
    be shared freely. Transformations in :mod:`kgmatch.saturation` never
    mutate their input.
    """

    def __init__(self) -> None:
        self.nodes: list[str] = []
        self.predicates: list[str] = []
        self._node_ids: dict[str, int] = {}
        self._predicate_ids: dict[str, int] = {}
        self._triples: set[tuple[int, int, int]] = set()
        self._fwd: dict[tuple[int, int], set[int]] = defaultdict(set)
        self._rev: dict[tuple[int, int], set[int]] = defaultdict(set)
        # abstract inverse predicate id -> id of the predicate it transposes
        self.abstract_inverses: dict[int, int] = {}
        self.parse_stats: ParseStats | None = None

    # -- interning -----------------------------------------------------
    def add_node(self, iri: str) -> int:
        nid = self._node_ids.get(iri)
        if nid is None:
            if not iri:
                raise ValueError("empty IRI")
            nid = len(self.nodes)
            self.nodes.append(iri)
            self._node_ids[iri] = nid
        return nid

    def add_predicate(self, iri: str, inverse_of: int | None = None) -> int:
        pid = self._predicate_ids.get(iri)
        if pid is None:
            if not iri:
                raise ValueError("empty IRI")
            pid = len(self.predicates)
            self.predicates.append(iri)
            self._predicate_ids[iri] = pid
            if inverse_of is not None:
                self.abstract_inverses[pid] = inverse_of
        return pid

    def node_id(self, iri: str) -> int:
        try:
            return self._node_ids[iri]
        except KeyError:
            raise LookupError(f"unknown node {iri!r}") from None

    def predicate_id(self, iri: str) -> int:
        try:
            return self._predicate_ids[iri]
        except KeyError:
            raise LookupError(f"unknown predicate {iri!r}") from None

    def has_node(self, iri: str) -> bool:
        return iri in self._node_ids

    def has_predicate(self, iri: str) -> bool:
        return iri in self._predicate_ids

    def is_abstract_inverse(self, pid: int) -> bool:
        return pid in self.abstract_inverses

    # -- triples -------------------------------------------------------
    def add_triple(self, s: int, p: int, o: int) -> bool:
        """Add a triple by ids; returns False if it was already present."""
        n = len(self.nodes)
        if not (0 <= s < n and 0 <= o < n and 0 <= p < len(self.predicates)):
            raise LookupError(f"triple ({s}, {p}, {o}) references unknown ids")
        t = (s, p, o)
        if t in self._triples:
            return False
        self._triples.add(t)
        self._fwd[s, p].add(o)
        self._rev[o, p].add(s)
        return True

    def add(self, s: str, p: str, o: str) -> bool:
        return self.add_triple(self.add_node(s), self.add_predicate(p), self.add_node(o))

    def remove_triple(self, s: int, p: int, o: int) -> bool:
        t = (s, p, o)
        if t not in self._triples:
            return False
        self._triples.remove(t)
        for index, key, val in ((self._fwd, (s, p), o), (self._rev, (o, p), s)):
            bucket = index[key]
            bucket.discard(val)
            if not bucket:
                del index[key]
        return True

    def has_triple(self, s: int, p: int, o: int) -> bool:
        return (s, p, o) in self._triples

    def __len__(self) -> int:
        return len(self._triples)

    def __contains__(self, triple: tuple[int, int, int]) -> bool:
        return triple in self._triples

    def triples(self) -> list[tuple[int, int, int]]:
        """All triples as id tuples in ascending order."""
        return sorted(self._triples)

    def iri_triples(self) -> set[tuple[str, str, str]]:
        nodes, preds = self.nodes, self.predicates
        return {(nodes[s], preds[p], nodes[o]) for s, p, o in self._triples}

    def triples_with_predicate(self, p: int) -> list[tuple[int, int]]:
        return sorted((s, o) for s, q, o in self._triples if q == p)

    # -- lookups -------------------------------------------------------
    def _check_node(self, i: int) -> None:
        if not 0 <= i < len(self.nodes):
            raise LookupError(f"unknown node id {i}")

    def _check_predicate(self, r: int) -> None:
        if not 0 <= r < len(self.predicates):
            raise LookupError(f"unknown predicate id {r}")

    def neighbors(self, i: int, r: int) -> frozenset[int]:
        """Objects reachable from ``i`` through one ``r`` edge."""
        self._check_node(i)
        self._check_predicate(r)
        return frozenset(self._fwd.get((i, r), ()))

    def predecessors(self, j: int, r: int) -> frozenset[int]:
        self._check_node(j)
        self._check_predicate(r)
        return frozenset(self._rev.get((j, r), ()))

    def used_predicates(self) -> set[int]:
        return {p for _, p, _ in self._triples}

    def edge_arrays(self) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        """Per-predicate (subject, object) index arrays, sorted, for every predicate id."""
        by_pred: dict[int, list[tuple[int, int]]] = {p: [] for p in range(len(self.predicates))}
        for s, p, o in self._triples:
            by_pred[p].append((s, o))
        out = {}
        for p, pairs in by_pred.items():
            pairs.sort()
            arr = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
            out[p] = (arr[:, 0].copy(), arr[:, 1].copy())
        return out

    def undirected_adjacency(self) -> list[set[int]]:
        adj: list[set[int]] = [set() for _ in self.nodes]
        for s, _, o in self._triples:
            adj[s].add(o)
            adj[o].add(s)
        return adj

    def copy(self) -> KnowledgeGraph:
        g = KnowledgeGraph()
        for iri in self.nodes:
            g.add_node(iri)
        for pid, iri in enumerate(self.predicates):
            g.add_predicate(iri, self.abstract_inverses.get(pid))
        for t in self.triples():
            g.add_triple(*t)
        return g

    @classmethod
    def from_iri_triples(
        cls,
        triples: Iterable[tuple[str, str, str]],
        nodes: Iterable[str] = (),
        abstract_inverses: dict[str, str] | None = None,
    ) -> KnowledgeGraph:
        """Build a graph; ``nodes`` are interned first (isolated nodes allowed).

        ``abstract_inverses`` maps an inverse predicate IRI to the IRI of the
        predicate it transposes, so the tag survives rebuilding.
        """
        g = cls()
        for iri in nodes:
            g.add_node(iri)
        abstract_inverses = abstract_inverses or {}
        pending = []
        for s, p, o in triples:
            pending.append((g.add_node(s), p, g.add_node(o)))
        for s, p, o in pending:
            g.add_triple(s, g.add_predicate(p), o)
        for inv, orig in abstract_inverses.items():
            if inv in g._predicate_ids and orig in g._predicate_ids:
                g.abstract_inverses[g._predicate_ids[inv]] = g._predicate_ids[orig]
        return g

    def __repr__(self) -> str:
        return (f"KnowledgeGraph(nodes={len(self.nodes)}, triples={len(self._triples)}, "
                f"predicates={len(self.predicates)})")


def graph_stats(g: KnowledgeGraph) -> dict[str, int]:
    return {
        "node_count": len(g.nodes),
        "edge_count": len(g),
        "predicate_count": len(g.predicates),
    }


# -- schema ------------------------------------------------------------------

@dataclass
class SchemaInfo:
    """Schema axioms found in a graph, keyed by IRI.

    IRIs rather than ids are kept because saturation rebuilds id tables.
    """

    subclass_edges: set[tuple[str, str]] = field(default_factory=set)
    subproperty_edges: set[tuple[str, str]] = field(default_factory=set)
    inverse_pairs: set[tuple[str, str]] = field(default_factory=set)
    symmetric_predicates: set[str] = field(default_factory=set)
    vocabulary: Vocabulary = DEFAULT_VOCABULARY

    @property
    def inverse_partners(self) -> dict[str, set[str]]:
        out: dict[str, set[str]] = defaultdict(set)
        for a, b in self.inverse_pairs:
            out[a].add(b)
            out[b].add(a)
        return out


def extract_schema(g: KnowledgeGraph, vocabulary: Vocabulary = DEFAULT_VOCABULARY) -> SchemaInfo:
    schema = SchemaInfo(vocabulary=vocabulary)
    v = vocabulary
    lookup = {}
    for name in ("type", "subclass_of", "subproperty_of", "inverse_of"):
        iri = getattr(v, name)
        lookup[name] = g._predicate_ids.get(iri)
    nodes = g.nodes
    for s, p, o in g.triples():
        if p == lookup["subclass_of"]:
            schema.subclass_edges.add((nodes[s], nodes[o]))
        elif p == lookup["subproperty_of"]:
            schema.subproperty_edges.add((nodes[s], nodes[o]))
        elif p == lookup["inverse_of"]:
            a, b = nodes[s], nodes[o]
            if a == b:
                schema.symmetric_predicates.add(a)
            else:
                schema.inverse_pairs.add((min(a, b), max(a, b)))
        elif p == lookup["type"] and nodes[o] == v.symmetric_property:
            schema.symmetric_predicates.add(nodes[s])
    return schema


# -- N-Triples -----------------------------------------------------------------

_SCHEME = re.compile(r"[A-Za-z][A-Za-z0-9+.\-]*:")
_WS = re.compile(r"[ \t]*")
_IRI = re.compile(r"<([^<>\"{}|^`\\\x00-\x20]*(?:\\[uU][0-9A-Fa-f]+[^<>\"{}|^`\\\x00-\x20]*)*)>")
_LITERAL = re.compile(
    r'"(?:[^"\\\n\r]|\\.)*"(?:@[A-Za-z]+(?:-[A-Za-z0-9]+)*|\^\^<[^<>\s]*>)?'
)
_UESC = re.compile(r"\\u([0-9A-Fa-f]{4})|\\U([0-9A-Fa-f]{8})")


def _unescape_iri(raw: str) -> str:
    return _UESC.sub(lambda m: chr(int(m.group(1) or m.group(2), 16)), raw)


def _escape_iri(iri: str) -> str:
    out = []
    for ch in iri:
        if ch in '<>"{}|^`\\' or ord(ch) <= 0x20:
            out.append(f"\\u{ord(ch):04X}")
        else:
            out.append(ch)
    return "".join(out)


def _read_iri(line: str, pos: int, lineno: int) -> tuple[str, int]:
    m = _IRI.match(line, pos)
    if not m:
        if line.startswith("_:", pos):
            raise NTriplesError("blank nodes are not supported", lineno, pos + 1)
        raise NTriplesError("expected <IRI>", lineno, pos + 1)
    iri = _unescape_iri(m.group(1))
    if not _SCHEME.match(iri):
        raise NTriplesError(f"relative IRI <{iri}>", lineno, pos + 1)
    return iri, m.end()


def iter_ntriples(lines: Iterable[str]) -> Iterator[tuple[str, str, str] | None]:
    """Yield IRI triples; yield ``None`` for each literal-object line (dropped)."""
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\r\n")
        pos = _WS.match(line).end()
        if pos == len(line) or line[pos] == "#":
            continue
        s, pos = _read_iri(line, pos, lineno)
        pos = _WS.match(line, pos).end()
        p, pos = _read_iri(line, pos, lineno)
        pos = _WS.match(line, pos).end()
        if line.startswith('"', pos):
            m = _LITERAL.match(line, pos)
            if not m:
                raise NTriplesError("malformed literal", lineno, pos + 1)
            o, pos = None, m.end()
        else:
            o, pos = _read_iri(line, pos, lineno)
        pos = _WS.match(line, pos).end()
        if not line.startswith(".", pos):
            raise NTriplesError("expected '.'", lineno, pos + 1)
        pos = _WS.match(line, pos + 1).end()
        if pos < len(line) and line[pos] != "#":
            raise NTriplesError("trailing content after '.'", lineno, pos + 1)
        yield None if o is None else (s, p, o)


def parse_ntriples(source: IO[bytes] | bytes | str | Iterable[str]) -> KnowledgeGraph:
    """Parse an N-Triples subset; literal-object triples are counted and dropped."""
    if isinstance(source, bytes):
        lines: Iterable[str] = source.decode("utf-8").splitlines()
    elif isinstance(source, str):
        lines = source.splitlines()
    elif hasattr(source, "read"):
        lines = io.TextIOWrapper(source, encoding="utf-8") if _is_binary(source) else source
    else:
        lines = source
    g = KnowledgeGraph()
    stats = ParseStats()
    for item in iter_ntriples(lines):
        stats.lines += 1
        if item is None:
            stats.literals_dropped += 1
            continue
        stats.triples_read += 1
        if not g.add(*item):
            stats.duplicates += 1
    g.parse_stats = stats
    return g


def _is_binary(stream) -> bool:
    return isinstance(stream, (io.RawIOBase, io.BufferedIOBase)) or "b" in getattr(stream, "mode", "")


def read_ntriples(path) -> KnowledgeGraph:
    with open(path, "rb") as fh:
        return parse_ntriples(fh)


def serialize_ntriples(g: KnowledgeGraph) -> str:
    nodes, preds = g.nodes, g.predicates
    lines = [
        f"<{_escape_iri(nodes[s])}> <{_escape_iri(preds[p])}> <{_escape_iri(nodes[o])}> ."
        for s, p, o in g.triples()
    ]
    return "\n".join(lines) + ("\n" if lines else "")


def write_ntriples(g: KnowledgeGraph, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_ntriples(g))
