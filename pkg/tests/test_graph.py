import io
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgmatch.graph import (
    OWL,
    RDF,
    RDFS,
    KnowledgeGraph,
    NTriplesError,
    extract_schema,
    graph_stats,
    parse_ntriples,
    serialize_ntriples,
)

from conftest import iri, nt


def test_single_line():
    g = parse_ntriples(nt(("a", "p", "b")))
    assert graph_stats(g) == {"node_count": 2, "edge_count": 1, "predicate_count": 1}


def test_literal_dropped_and_counted():
    text = f'<{iri("a")}> <{iri("p")}> "5" .\n' + nt(("a", "p", "b"))
    g = parse_ntriples(text)
    assert len(g) == 1
    assert g.parse_stats.literals_dropped == 1


@pytest.mark.parametrize("lit", ['"x"@en', '"5"^^<http://www.w3.org/2001/XMLSchema#int>', r'"a \"q\" b"'])
def test_literal_forms(lit):
    g = parse_ntriples(f"<{iri('a')}> <{iri('p')}> {lit} .\n")
    assert len(g) == 0 and g.parse_stats.literals_dropped == 1


def test_duplicates_collapse():
    g = parse_ntriples(nt(("a", "p", "b"), ("a", "p", "b")))
    assert len(g) == 1 and g.parse_stats.duplicates == 1


def test_comments_and_blank_lines():
    text = "# header\n\n" + nt(("a", "p", "b")).rstrip("\n") + "  # trailing\n   \n"
    assert len(parse_ntriples(text)) == 1


def test_sources_bytes_stream_iterable():
    text = nt(("a", "p", "b"), ("b", "q", "c"))
    for src in (text, text.encode(), io.BytesIO(text.encode()), io.StringIO(text), text.splitlines()):
        assert len(parse_ntriples(src)) == 2


@pytest.mark.parametrize("line,lineno", [
    ("<a> <http://ex.org/p> <http://ex.org/b> .", 1),             # relative subject
    ("<http://ex.org/a> <http://ex.org/p> <http://ex.org/b>", 1),  # missing dot
    ("<http://ex.org/a> <http://ex.org/p> .", 1),
    ('<http://ex.org/a> <http://ex.org/p> "open .', 1),
    ("_:b0 <http://ex.org/p> <http://ex.org/b> .", 1),
])
def test_malformed_lines(line, lineno):
    with pytest.raises(NTriplesError) as exc:
        parse_ntriples(line + "\n")
    assert exc.value.line == lineno


def test_error_reports_line_number():
    text = nt(("a", "p", "b")) + "<http://ex.org/a> <p> <http://ex.org/b> .\n"
    with pytest.raises(NTriplesError) as exc:
        parse_ntriples(text)
    assert exc.value.line == 2 and exc.value.column > 0


def test_neighbors_examples():
    g = parse_ntriples(nt(("a", "p", "b"), ("a", "p", "c")))
    a, b, c, p = g.node_id(iri("a")), g.node_id(iri("b")), g.node_id(iri("c")), g.predicate_id(iri("p"))
    assert g.neighbors(a, p) == {b, c}
    assert g.neighbors(b, p) == frozenset()
    g.add_triple(b, p, a)
    assert g.neighbors(b, p) == {a}


def test_neighbors_unknown_id():
    g = parse_ntriples(nt(("a", "p", "b")))
    with pytest.raises(LookupError):
        g.neighbors(7, 0)
    with pytest.raises(LookupError):
        g.neighbors(0, 3)
    with pytest.raises(LookupError):
        g.node_id("http://nowhere/")


def test_stats_examples():
    assert graph_stats(KnowledgeGraph()) == {"node_count": 0, "edge_count": 0, "predicate_count": 0}
    g = parse_ntriples(nt(("a", "p", "b"), ("a", "q", "b")))
    assert graph_stats(g) == {"node_count": 2, "edge_count": 2, "predicate_count": 2}


def test_stats_with_duplicates_against_text_oracle():
    r = random.Random(3)
    lines = [f"<{iri(f'n{r.randrange(30)}')}> <{iri(f'p{r.randrange(4)}')}> <{iri(f'n{r.randrange(30)}')}> ."
             for _ in range(93)]
    while len(set(lines)) < 93:
        lines = list(dict.fromkeys(lines))
        lines.append(f"<{iri(f'n{r.randrange(30)}')}> <{iri(f'p{r.randrange(4)}')}> <{iri(f'n{r.randrange(30)}')}> .")
    lines = lines[:93]
    dup = [lines[r.randrange(93)] for _ in range(7)]
    text = "\n".join(lines + dup) + "\n"
    assert text.count("\n") == 100
    g = parse_ntriples(text)
    assert graph_stats(g)["edge_count"] == len(set(text.splitlines())) == 93


triple_lists = st.lists(st.tuples(st.integers(0, 8), st.integers(0, 3), st.integers(0, 8)), max_size=40)


def _graph(triples) -> KnowledgeGraph:
    g = KnowledgeGraph()
    for s, p, o in triples:
        g.add(iri(f"n{s}"), iri(f"p{p}"), iri(f"n{o}"))
    return g


@settings(max_examples=60, deadline=None)
@given(triple_lists)
def test_transpose_consistency(triples):
    g = _graph(triples)
    assert sum(len(v) for v in g._fwd.values()) == len(g)
    for s, p, o in g.triples():
        assert o in g.neighbors(s, p) and s in g.predecessors(o, p)
    for (s, p), objs in g._fwd.items():
        for o in objs:
            assert s in g._rev[o, p]


@settings(max_examples=60, deadline=None)
@given(triple_lists)
def test_round_trip(triples):
    g = _graph(triples)
    again = parse_ntriples(serialize_ntriples(g))
    assert again.iri_triples() == g.iri_triples()


def test_round_trip_escapes_unicode():
    g = KnowledgeGraph()
    g.add("http://ex.org/café", iri("p"), "http://ex.org/a%20b")
    again = parse_ntriples(serialize_ntriples(g))
    assert again.iri_triples() == g.iri_triples()
    assert parse_ntriples("<http://ex.org/caf\\u00E9> <http://ex.org/p> <http://ex.org/x> .\n").has_node(
        "http://ex.org/café")


def test_interning_stable():
    g = KnowledgeGraph()
    a = g.add_node(iri("a"))
    g.add(iri("b"), iri("p"), iri("a"))
    assert g.add_node(iri("a")) == a == g.node_id(iri("a"))
    assert g.nodes == [iri("a"), iri("b")]


def test_schema_extraction():
    text = "".join(f"<{s}> <{p}> <{o}> .\n" for s, p, o in [
        (iri("A"), RDFS + "subClassOf", iri("B")),
        (iri("p"), RDFS + "subPropertyOf", iri("q")),
        (iri("r2"), OWL + "inverseOf", iri("r1")),
        (iri("s"), RDF + "type", OWL + "SymmetricProperty"),
        (iri("t"), OWL + "inverseOf", iri("t")),
    ])
    schema = extract_schema(parse_ntriples(text))
    assert schema.subclass_edges == {(iri("A"), iri("B"))}
    assert schema.subproperty_edges == {(iri("p"), iri("q"))}
    assert schema.inverse_pairs == {(iri("r1"), iri("r2"))}
    assert schema.symmetric_predicates == {iri("s"), iri("t")}
