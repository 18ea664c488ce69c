"""Rule-based saturation of a knowledge graph into the variants G0..G5.

Each transformation takes a graph and returns a new one. ``build_variant``
runs the flagged rules to a global fixpoint, then adds abstract inverses for
every predicate that has no declared inverse or symmetry.
"""
from __future__ import annotations

from collections import deque
from dataclasses import asdict, dataclass, field

from .graph import (
    DEFAULT_VOCABULARY,
    INVERSE_SUFFIX,
    KnowledgeGraph,
    SchemaInfo,
    Vocabulary,
    extract_schema,
    graph_stats,
)


class SaturationConflict(ValueError):
    """A predicate is declared both symmetric and part of an inverse pair."""


@dataclass(frozen=True)
class GraphVariant:
    tag: str
    contract_sameas: bool = False
    inverse_symmetry_semantics: bool = False
    close_predicates: bool = False
    close_classes: bool = False

    @property
    def flags(self) -> dict[str, bool]:
        d = asdict(self)
        d.pop("tag")
        return d


VARIANTS = {
    "G0": GraphVariant("G0"),
    "G1": GraphVariant("G1", contract_sameas=True),
    "G2": GraphVariant("G2", inverse_symmetry_semantics=True),
    "G3": GraphVariant("G3", close_predicates=True),
    "G4": GraphVariant("G4", close_classes=True),
    "G5": GraphVariant("G5", True, True, True, True),
}


def get_variant(tag: str) -> GraphVariant:
    try:
        return VARIANTS[tag.upper()]
    except KeyError:
        raise ValueError(f"unknown graph variant {tag!r}; expected one of g0..g5") from None


@dataclass
class SaturationReport:
    variant: str
    flags: dict[str, bool]
    before: dict[str, int]
    after: dict[str, int] = field(default_factory=dict)
    added_triples: int = 0
    merged_nodes: int = 0
    abstract_inverses_added: int = 0
    abstract_inverse_triples: int = 0
    fixpoint_rounds: int = 0
    inverse_order: str = "hierarchies closed over original predicates, then transposed"

    def to_dict(self) -> dict:
        return asdict(self)


# -- helpers -------------------------------------------------------------------

def _rebuild(g: KnowledgeGraph, triples, keep_nodes=None) -> KnowledgeGraph:
    """New graph from id triples of ``g``; only used predicates are kept, in id order.

    ``keep_nodes`` (ids, in the desired order) are retained even without
    triples; by default all nodes are.
    """
    out = KnowledgeGraph()
    node_ids = range(len(g.nodes)) if keep_nodes is None else keep_nodes
    for nid in node_ids:
        out.add_node(g.nodes[nid])
    triples = sorted(triples)
    used = sorted({p for _, p, _ in triples})
    for p in used:
        out.add_predicate(g.predicates[p])
    for p in used:
        if p in g.abstract_inverses and g.abstract_inverses[p] in used:
            out.abstract_inverses[out.predicate_id(g.predicates[p])] = out.predicate_id(
                g.predicates[g.abstract_inverses[p]])
    for s, p, o in triples:
        out.add_triple(out.add_node(g.nodes[s]), out.predicate_id(g.predicates[p]),
                       out.add_node(g.nodes[o]))
    return out


def _reachable(edges: set[tuple[str, str]], reflexive: bool) -> dict[str, set[str]]:
    """Ancestors of every vertex along ``edges``; cycles collapse naturally."""
    succ: dict[str, set[str]] = {}
    for a, b in edges:
        succ.setdefault(a, set()).add(b)
        succ.setdefault(b, set())
    out = {}
    for start in succ:
        seen = {start} if reflexive else set()
        stack = list(succ[start])
        while stack:
            x = stack.pop()
            if x in seen:
                continue
            seen.add(x)
            stack.extend(succ[x])
        out[start] = seen
    return out


def _add(g: KnowledgeGraph, s: int, p_iri: str, o: int) -> bool:
    return g.add_triple(s, g.add_predicate(p_iri), o)


def _check_conflicts(schema: SchemaInfo) -> None:
    partners = schema.inverse_partners
    clash = sorted(schema.symmetric_predicates & set(partners))
    if clash:
        raise SaturationConflict(
            f"predicates declared both symmetric and inverse of another: {clash}")


# -- individual transformations --------------------------------------------------

def add_abstract_inverses(g: KnowledgeGraph, exempt: set[str] = frozenset()) -> KnowledgeGraph:
    """Add ``<iri>#inv`` transposes for every non-exempt original predicate."""
    if g.abstract_inverses:
        raise ValueError("graph already carries abstract inverses")
    out = g.copy()
    _add_inverses_inplace(out, exempt)
    return out


def _add_inverses_inplace(g: KnowledgeGraph, exempt) -> tuple[int, int]:
    originals = [p for p in sorted(g.used_predicates()) if g.predicates[p] not in exempt]
    edges = {p: g.triples_with_predicate(p) for p in originals}
    added_triples = 0
    for p in originals:
        inv_iri = g.predicates[p] + INVERSE_SUFFIX
        if g.has_predicate(inv_iri):
            raise ValueError(f"predicate {inv_iri!r} already exists")
        inv = g.add_predicate(inv_iri, inverse_of=p)
        for s, o in edges[p]:
            added_triples += g.add_triple(o, inv, s)
    return len(originals), added_triples


def contract_sameas(g: KnowledgeGraph, sameas_pred: str = DEFAULT_VOCABULARY.same_as
                    ) -> tuple[KnowledgeGraph, dict[str, str]]:
    """Merge sameAs-connected nodes into their lexicographically smallest IRI."""
    n = len(g.nodes)
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    sa = g.predicate_id(sameas_pred) if g.has_predicate(sameas_pred) else None
    if sa is not None:
        for s, p, o in g.triples():
            if p == sa:
                rs, ro = find(s), find(o)
                if rs != ro:
                    # smaller IRI stays root
                    if g.nodes[rs] < g.nodes[ro]:
                        parent[ro] = rs
                    else:
                        parent[rs] = ro
    rep = [find(i) for i in range(n)]
    rep_map = {g.nodes[i]: g.nodes[rep[i]] for i in range(n)}
    if sa is None:
        return g.copy(), rep_map

    triples = set()
    for s, p, o in g.triples():
        if p == sa:
            continue
        rs, ro = rep[s], rep[o]
        if s == o or rs != ro:
            triples.add((rs, p, ro))
    # node order: first appearance of each representative
    keep, seen = [], set()
    for i in range(n):
        if rep[i] not in seen:
            seen.add(rep[i])
            keep.append(rep[i])
    return _rebuild(g, triples, keep_nodes=keep), rep_map


def _close_predicates_inplace(g: KnowledgeGraph, schema: SchemaInfo) -> int:
    supers = _reachable(schema.subproperty_edges, reflexive=False)
    added = 0
    for s, p, o in g.triples():
        for sup in sorted(supers.get(g.predicates[p], ())):
            added += _add(g, s, sup, o)
    return added


def _close_classes_inplace(g: KnowledgeGraph, schema: SchemaInfo) -> int:
    v = schema.vocabulary
    if not g.has_predicate(v.type):
        return 0
    supers = _reachable(schema.subclass_edges, reflexive=False)
    tid = g.predicate_id(v.type)
    added = 0
    for s, p, o in g.triples():
        if p != tid:
            continue
        for sup in sorted(supers.get(g.nodes[o], ())):
            added += g.add_triple(s, tid, g.add_node(sup))
    return added


def _complete_inverse_symmetry_inplace(g: KnowledgeGraph, schema: SchemaInfo) -> int:
    _check_conflicts(schema)
    added = 0
    for r in sorted(schema.symmetric_predicates):
        if g.has_predicate(r):
            for s, o in g.triples_with_predicate(g.predicate_id(r)):
                added += g.add_triple(o, g.predicate_id(r), s)
    for a, b in sorted(schema.inverse_pairs):
        for x, y in ((a, b), (b, a)):
            if g.has_predicate(x):
                for s, o in g.triples_with_predicate(g.predicate_id(x)):
                    added += _add(g, o, y, s)
    return added


def close_predicate_hierarchy(g: KnowledgeGraph, schema: SchemaInfo) -> KnowledgeGraph:
    """Every (i, r, j) with r below r' in the subproperty closure yields (i, r', j)."""
    out = g.copy()
    _close_predicates_inplace(out, schema)
    return out


def close_class_hierarchy(g: KnowledgeGraph, schema: SchemaInfo) -> KnowledgeGraph:
    """Complete rdf:type through the transitive closure of subClassOf."""
    out = g.copy()
    _close_classes_inplace(out, schema)
    return out


def apply_inverse_symmetry(g: KnowledgeGraph, schema: SchemaInfo) -> KnowledgeGraph:
    """Complete symmetric and declared-inverse adjacencies; abstract inverses for the rest."""
    if g.abstract_inverses:
        raise ValueError("graph already carries abstract inverses")
    out = g.copy()
    _complete_inverse_symmetry_inplace(out, schema)
    _add_inverses_inplace(out, _exempt(schema))
    return out


def _has_proper_sameas(g: KnowledgeGraph, sameas_pred: str) -> bool:
    if not g.has_predicate(sameas_pred):
        return False
    return any(s != o for s, o in g.triples_with_predicate(g.predicate_id(sameas_pred)))


def _exempt(schema: SchemaInfo) -> set[str]:
    return set(schema.symmetric_predicates) | set(schema.inverse_partners)


# -- variants ------------------------------------------------------------------

def build_variant(k: KnowledgeGraph, variant: GraphVariant | str,
                  vocabulary: Vocabulary = DEFAULT_VOCABULARY,
                  ) -> tuple[KnowledgeGraph, SaturationReport, dict[str, str]]:
    """Apply the variant's rules to a global fixpoint, then inverse handling.

    Order: sameAs contraction, predicate closure, class closure, inverse and
    symmetry completion, repeated until nothing changes; abstract inverses
    are added last and never closed themselves.
    """
    if isinstance(variant, str):
        variant = get_variant(variant)
    if k.abstract_inverses:
        raise ValueError("input graph already carries abstract inverses")
    report = SaturationReport(variant=variant.tag, flags=variant.flags, before=graph_stats(k))

    g = k.copy()
    rep_map = {iri: iri for iri in k.nodes}
    rounds = 0
    while True:
        rounds += 1
        changed = False
        if variant.contract_sameas and _has_proper_sameas(g, vocabulary.same_as):
            # rules may derive new sameAs edges, so contraction is part of the fixpoint
            g, step = contract_sameas(g, vocabulary.same_as)
            rep_map = {iri: step[r] for iri, r in rep_map.items()}
            changed = True
        schema = extract_schema(g, vocabulary)
        added = 0
        if variant.close_predicates:
            added += _close_predicates_inplace(g, schema)
        if variant.close_classes:
            added += _close_classes_inplace(g, extract_schema(g, vocabulary))
        if variant.inverse_symmetry_semantics:
            added += _complete_inverse_symmetry_inplace(g, extract_schema(g, vocabulary))
        report.added_triples += added
        if not (added or changed):
            break
    if variant.contract_sameas and g.has_predicate(vocabulary.same_as):
        # only derived sameAs self-loops can be left at this point
        sa = g.predicate_id(vocabulary.same_as)
        g = _rebuild(g, [t for t in g.triples() if t[1] != sa])
    report.merged_nodes = len(k.nodes) - len(set(rep_map.values()))
    report.fixpoint_rounds = rounds

    exempt: set[str] = set()
    if variant.inverse_symmetry_semantics:
        schema = extract_schema(g, vocabulary)
        _check_conflicts(schema)
        exempt = _exempt(schema)
    n_inv, n_inv_triples = _add_inverses_inplace(g, exempt)
    report.abstract_inverses_added = n_inv
    report.abstract_inverse_triples = n_inv_triples
    report.after = graph_stats(g)
    return g, report, rep_map


def reduce_to_khop(g: KnowledgeGraph, seeds, k: int) -> KnowledgeGraph:
    """Keep nodes within ``k`` undirected hops of any seed and the triples among them."""
    if k < 0:
        raise ValueError("hop count must be non-negative")
    seeds = sorted(set(seeds))
    for s in seeds:
        if not 0 <= s < len(g.nodes):
            raise LookupError(f"unknown seed node id {s}")
    adj = g.undirected_adjacency()
    dist = {s: 0 for s in seeds}
    queue = deque(seeds)
    while queue:
        x = queue.popleft()
        if dist[x] == k:
            continue
        for y in sorted(adj[x]):
            if y not in dist:
                dist[y] = dist[x] + 1
                queue.append(y)
    keep = set(dist)
    triples = [(s, p, o) for s, p, o in g.triples() if s in keep and o in keep]
    return _rebuild(g, triples, keep_nodes=sorted(keep))
