"""Deterministic generator of small aggregated knowledge graphs with planted alignments.

Relationship nodes (the match candidates) are reified n-ary facts pointing at
drug-, gene- and phenotype-like component entities. Each planted cluster draws
a core of components; members are derived from an earlier member through one
alignment relation whose strength controls how many neighbors are shared.
Component entities are partly duplicated across sources and joined by sameAs.
"""
from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field

from .alignment import AlignmentLink, AlignmentRelation
from .graph import OWL, RDF, RDFS

R = AlignmentRelation
BASE = "http://synth.example.org/"
VOCAB = BASE + "vocab#"
ROLES = ("drug", "gene", "phenotype")
ROLE_PREDICATES = {"drug": "hasDrug", "gene": "hasGeneticFactor", "phenotype": "hasPhenotype"}
RELATIONSHIP_SEGMENT = "/relationship/"
S_PATTERN = RELATIONSHIP_SEGMENT


class InfeasibleConfig(ValueError):
    pass


@dataclass
class SynthConfig:
    num_sources: int = 3
    num_relationship_clusters: int = 8
    cluster_size_range: tuple[int, int] = (12, 12)
    num_component_entities: int = 60        # per role
    core_components_per_role: int = 2
    relation_mix: dict[str, float] = field(default_factory=lambda: {
        "sameAs": 0.2, "closeMatch": 0.2, "relatedMatch": 0.2, "related": 0.2, "broadMatch": 0.2})
    overlap: float = 0.8                    # separability knob in (0, 1]
    ontology_depth: int = 3
    sameas_duplicate_rate: float = 0.3
    noise_edges: int = 40
    unaligned_relationships: int = 12
    extra_link_rate: float = 1.0            # chance of linking any further same-cluster pair
    seed: int = 0

    def validate(self) -> None:
        if abs(sum(self.relation_mix.values()) - 1.0) > 1e-9:
            raise InfeasibleConfig("relation_mix probabilities must sum to 1")
        unknown = set(self.relation_mix) - {r.value for r in R}
        if unknown:
            raise InfeasibleConfig(f"unknown relations in relation_mix: {sorted(unknown)}")
        lo, hi = self.cluster_size_range
        if not 1 <= lo <= hi:
            raise InfeasibleConfig("cluster_size_range must satisfy 1 <= low <= high")
        for name in ("num_sources", "num_relationship_clusters", "num_component_entities",
                     "core_components_per_role", "ontology_depth"):
            if getattr(self, name) < 1:
                raise InfeasibleConfig(f"{name} must be positive")
        if min(self.noise_edges, self.unaligned_relationships) < 0:
            raise InfeasibleConfig("counts must be non-negative")
        if self.core_components_per_role + 2 > self.num_component_entities:
            raise InfeasibleConfig("not enough component entities for the requested cluster cores")
        if not 0 < self.overlap <= 1:
            raise InfeasibleConfig("overlap must be in (0, 1]")
        if not 0 <= self.sameas_duplicate_rate <= 1 or not 0 <= self.extra_link_rate <= 1:
            raise InfeasibleConfig("rates must lie in [0, 1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cluster_size_range"] = list(self.cluster_size_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> SynthConfig:
        d = dict(d)
        if "cluster_size_range" in d:
            d["cluster_size_range"] = tuple(d["cluster_size_range"])
        return cls(**d)


@dataclass
class GroundTruthLedger:
    links: list[AlignmentLink]
    cluster_labels: dict[str, int]          # every relationship node; unaligned ones get their own label
    duplicates: dict[str, str]              # duplicate entity -> canonical entity
    axioms: list[tuple[str, str, str]]
    neighbor_sets: dict[str, list[str]]     # relationship -> canonical components

    def to_dict(self) -> dict:
        return {
            "links": [link.to_dict() for link in self.links],
            "cluster_labels": dict(sorted(self.cluster_labels.items())),
            "duplicates": dict(sorted(self.duplicates.items())),
            "axioms": [list(a) for a in self.axioms],
            "neighbor_sets": dict(sorted(self.neighbor_sets.items())),
        }

    @classmethod
    def from_dict(cls, d: dict) -> GroundTruthLedger:
        return cls([AlignmentLink.from_dict(x) for x in d["links"]], d["cluster_labels"],
                   d["duplicates"], [tuple(a) for a in d["axioms"]], d["neighbor_sets"])

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"


# Probability that a member keeps each neighbor of the member it derives from.
_KEEP = {R.SAME_AS: 1.0, R.CLOSE_MATCH: 0.9, R.RELATED_MATCH: 0.6, R.RELATED: 0.55, R.BROAD_MATCH: 1.0}
_STRONG = {R.SAME_AS, R.CLOSE_MATCH}
CLOSE_JACCARD = 0.75
RELATED_MATCH_JACCARD = 0.4


def classify_pair(a: set, b: set) -> tuple[AlignmentRelation, bool]:
    """Relation implied by two component sets; the flag says whether to swap the link direction.

    The more specific member (strict superset) points broadMatch at the broader one.
    """
    if a == b:
        return R.SAME_AS, False
    if a > b:
        return R.BROAD_MATCH, False
    if b > a:
        return R.BROAD_MATCH, True
    jac = len(a & b) / len(a | b)
    if jac >= CLOSE_JACCARD:
        return R.CLOSE_MATCH, False
    if jac >= RELATED_MATCH_JACCARD:
        return R.RELATED_MATCH, False
    return R.RELATED, False


def _entity(role: str, idx: int, source: int) -> str:
    return f"{BASE}src{source}/{role}/{role[0]}{idx:03d}"


def _class_tree(role: str, depth: int) -> tuple[list[str], list[tuple[str, str]]]:
    """Binary class hierarchy under the role root; returns leaves and subClassOf pairs."""
    root = f"{VOCAB}{role.capitalize()}"
    level, edges = [root], []
    for d in range(depth):
        nxt = []
        for parent in level:
            for b in range(2):
                child = f"{parent}_{b}" if d else f"{VOCAB}{role.capitalize()}_{b}"
                edges.append((child, parent))
                nxt.append(child)
        level = nxt
    return level, edges


def generate(config: SynthConfig) -> tuple[str, GroundTruthLedger]:
    """Return (N-Triples text, ledger). Output lines are sorted, so equal seeds give equal bytes."""
    config.validate()
    rng = random.Random(config.seed)
    link_rng = random.Random(f"links:{config.seed}")   # extra links never perturb the graph draws
    triples: set[tuple[str, str, str]] = set()
    axioms: list[tuple[str, str, str]] = []
    type_ = RDF + "type"
    relationship_class = VOCAB + "Relationship"

    def axiom(s, p, o):
        triples.add((s, p, o))
        axioms.append((s, p, o))

    # schema
    pred = {role: VOCAB + name for role, name in ROLE_PREDICATES.items()}
    involves, related_to = VOCAB + "involves", VOCAB + "relatedTo"
    interacts, associated = VOCAB + "interactsWith", VOCAB + "associatedWith"
    drug_of = VOCAB + "drugOf"
    for p in pred.values():
        axiom(p, RDFS + "subPropertyOf", involves)
    axiom(involves, RDFS + "subPropertyOf", related_to)
    axiom(pred["drug"], OWL + "inverseOf", drug_of)
    axiom(interacts, type_, OWL + "SymmetricProperty")
    leaves = {}
    for role in ROLES:
        leaves[role], edges = _class_tree(role, config.ontology_depth)
        for child, parent in edges:
            axiom(child, RDFS + "subClassOf", parent)

    # canonical entities, their classes and per-source duplicates
    n_ent = config.num_component_entities
    home = {(role, i): i % config.num_sources for role in ROLES for i in range(n_ent)}
    entity_class = {(role, i): rng.choice(leaves[role]) for role in ROLES for i in range(n_ent)}
    duplicates: dict[str, str] = {}
    has_copy = {}
    for role in ROLES:
        for i in range(n_ent):
            for s in range(config.num_sources):
                has_copy[role, i, s] = s != home[role, i] and rng.random() < config.sameas_duplicate_rate

    def canonical(ent):
        return _entity(ent[0], ent[1], home[ent])

    def reference(ent, source):
        """IRI a relationship from ``source`` uses for component ``ent``."""
        role, i = ent
        if has_copy[role, i, source]:
            dup = _entity(role, i, source)
            duplicates[dup] = canonical(ent)
            return dup
        return canonical(ent)

    for ent in home:
        triples.add((canonical(ent), type_, entity_class[ent]))

    all_entities = sorted(home)
    rel_mix = sorted(config.relation_mix.items())
    rel_names, rel_weights = [r for r, _ in rel_mix], [w for _, w in rel_mix]

    links: list[AlignmentLink] = []
    labels: dict[str, int] = {}
    neighbor_sets: dict[str, list[str]] = {}

    def emit_relationship(iri: str, source: int, comps: set) -> None:
        triples.add((iri, type_, relationship_class))
        for ent in sorted(comps):
            triples.add((iri, pred[ent[0]], reference(ent, source)))
        neighbor_sets[iri] = sorted(canonical(e) for e in comps)

    def random_extra(exclude: set):
        choices = [e for e in all_entities if e not in exclude]
        return rng.choice(choices)

    label = 0
    for c in range(config.num_relationship_clusters):
        core = set()
        for role in ROLES:
            for i in rng.sample(range(n_ent), config.core_components_per_role):
                core.add((role, i))
        size = rng.randint(*config.cluster_size_range)
        members: list[tuple[str, set]] = []
        for m in range(size):
            source = rng.randrange(config.num_sources)
            iri = f"{BASE}src{source}{RELATIONSHIP_SEGMENT}r{c:02d}_{m:02d}"
            if m == 0:
                comps = set(core)
            else:
                parent_iri, parent = members[rng.randrange(m)]
                rel = R(rng.choices(rel_names, rel_weights)[0])
                keep = _KEEP[rel] if rel in _STRONG or rel is R.BROAD_MATCH else _KEEP[rel] * config.overlap
                comps = {e for e in sorted(parent) if rng.random() < keep}
                if rel not in _STRONG and rel is not R.BROAD_MATCH:
                    # weak relations drift: re-anchor some core components, add a stranger
                    comps |= {e for e in sorted(core - parent) if rng.random() < 0.5 * config.overlap}
                    comps.add(random_extra(parent | core))
                if rel is R.BROAD_MATCH:
                    comps.add(random_extra(parent))
                if not comps:
                    comps.add(rng.choice(sorted(core)))
                links.append(AlignmentLink(iri, parent_iri, rel))
            members.append((iri, comps))
            labels[iri] = label
            emit_relationship(iri, source, comps)
        linked = {frozenset((l.source, l.target)) for l in links}
        for i in range(size):
            for j in range(i + 1, size):
                (a_iri, a), (b_iri, b) = members[j], members[i]
                if frozenset((a_iri, b_iri)) in linked or link_rng.random() >= config.extra_link_rate:
                    continue
                rel, swap = classify_pair(a, b)
                links.append(AlignmentLink(b_iri, a_iri, rel) if swap else AlignmentLink(a_iri, b_iri, rel))
        label += 1

    for u in range(config.unaligned_relationships):
        source = rng.randrange(config.num_sources)
        iri = f"{BASE}src{source}{RELATIONSHIP_SEGMENT}u{u:03d}"
        comps = set(rng.sample(all_entities, rng.randint(3, 5)))
        labels[iri] = label
        label += 1
        emit_relationship(iri, source, comps)

    for dup, canon in sorted(duplicates.items()):
        triples.add((dup, OWL + "sameAs", canon))
        triples.add((dup, type_, next(o for s, p, o in sorted(triples) if s == canon and p == type_)))

    drugs = [e for e in all_entities if e[0] == "drug"]
    genes = [e for e in all_entities if e[0] == "gene"]
    phenos = [e for e in all_entities if e[0] == "phenotype"]
    for k in range(config.noise_edges):
        if k % 2 == 0:
            a, b = rng.sample(drugs, 2)
            triples.add((canonical(a), interacts, canonical(b)))
        else:
            triples.add((canonical(rng.choice(genes)), associated, canonical(rng.choice(phenos))))

    for link in links:
        triples.add((link.source, link.relation.iri, link.target))

    text = "".join(f"<{s}> <{p}> <{o}> .\n" for s, p, o in sorted(triples))
    ledger = GroundTruthLedger(sorted(links), labels, duplicates, axioms, neighbor_sets)
    return text, ledger


def shared_neighbors(ledger: GroundTruthLedger, a: str, b: str) -> int:
    return len(set(ledger.neighbor_sets[a]) & set(ledger.neighbor_sets[b]))
