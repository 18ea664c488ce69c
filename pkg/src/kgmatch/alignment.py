"""Alignment links, gold clusterings C0..C6 and stratified 5-fold splits."""
from __future__ import annotations

import enum
import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .graph import OWL, SKOS, KnowledgeGraph

NUM_FOLDS = 5


class AlignmentRelation(str, enum.Enum):
    SAME_AS = "sameAs"
    CLOSE_MATCH = "closeMatch"
    RELATED_MATCH = "relatedMatch"
    RELATED = "related"
    BROAD_MATCH = "broadMatch"

    @property
    def iri(self) -> str:
        return (OWL if self is AlignmentRelation.SAME_AS else SKOS) + self.value

    @property
    def symmetric(self) -> bool:
        return self is not AlignmentRelation.BROAD_MATCH

    @property
    def transitive(self) -> bool:
        return self is not AlignmentRelation.RELATED

    @classmethod
    def from_iri(cls, iri: str) -> AlignmentRelation:
        for rel in cls:
            if rel.iri == iri:
                return rel
        raise ValueError(f"not an alignment relation IRI: {iri}")


R = AlignmentRelation
ALIGNMENT_PREDICATES = {rel.iri: rel for rel in R}

GOLD_CLUSTERINGS: dict[str, frozenset[AlignmentRelation]] = {
    "C0": frozenset(R),
    "C1": frozenset({R.SAME_AS, R.CLOSE_MATCH, R.RELATED_MATCH, R.RELATED}),
    "C2": frozenset({R.SAME_AS}),
    "C3": frozenset({R.CLOSE_MATCH}),
    "C4": frozenset({R.RELATED_MATCH}),
    "C5": frozenset({R.RELATED}),
    "C6": frozenset({R.BROAD_MATCH}),
}


@dataclass(frozen=True, order=True)
class AlignmentLink:
    source: str
    target: str
    relation: AlignmentRelation

    def __post_init__(self):
        if self.source == self.target:
            raise ValueError(f"alignment link from {self.source} to itself")

    def to_dict(self) -> dict:
        return {"source": self.source, "target": self.target, "relation": self.relation.value}

    @classmethod
    def from_dict(cls, d: dict) -> AlignmentLink:
        return cls(d["source"], d["target"], AlignmentRelation(d["relation"]))


def strip_alignments(g: KnowledgeGraph, s_nodes, link_predicates: dict[str, AlignmentRelation] | None = None
                     ) -> tuple[KnowledgeGraph, list[AlignmentLink]]:
    """Remove alignment triples between match candidates and return them as links.

    Alignment-typed triples with an endpoint outside ``s_nodes`` (e.g. sameAs
    between duplicated entities) stay in the graph.
    """
    link_predicates = ALIGNMENT_PREDICATES if link_predicates is None else link_predicates
    s_nodes = set(s_nodes)
    out = KnowledgeGraph()
    for iri in g.nodes:
        out.add_node(iri)
    links = set()
    kept = []
    for s, p, o in g.triples():
        si, pi, oi = g.nodes[s], g.predicates[p], g.nodes[o]
        if pi in link_predicates and si in s_nodes and oi in s_nodes:
            if si != oi:
                links.add(AlignmentLink(si, oi, link_predicates[pi]))
            continue
        kept.append((si, pi, oi))
    for si, pi, oi in kept:
        out.add(si, pi, oi)
    return out, sorted(links)


@dataclass
class GoldClustering:
    id: str
    relations: frozenset[AlignmentRelation]
    labels: dict[str, int]
    cluster_sizes: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.cluster_sizes:
            hist = Counter(Counter(self.labels.values()).values())
            self.cluster_sizes = dict(sorted(hist.items()))

    @property
    def sizes(self) -> dict[int, int]:
        """Cluster label -> number of members."""
        return dict(Counter(self.labels.values()))

    def members(self, label: int) -> list[str]:
        return sorted(n for n, lab in self.labels.items() if lab == label)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "relations": sorted(r.value for r in self.relations),
            "labels": dict(sorted(self.labels.items())),
            "cluster_sizes": {str(k): v for k, v in self.cluster_sizes.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> GoldClustering:
        return cls(d["id"], frozenset(AlignmentRelation(r) for r in d["relations"]),
                   {k: int(v) for k, v in d["labels"].items()})


def compute_gold_clustering(links, clustering_id: str, s_nodes) -> GoldClustering:
    """Connected components of S under the clustering's relations, links undirected."""
    cid = clustering_id.upper()
    if cid not in GOLD_CLUSTERINGS:
        raise ValueError(f"unknown gold clustering {clustering_id!r}")
    relations = GOLD_CLUSTERINGS[cid]
    parent = {n: n for n in s_nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for link in links:
        if link.relation not in relations:
            continue
        if link.source not in parent or link.target not in parent:
            raise ValueError(f"link endpoint outside the match-candidate set: {link}")
        a, b = find(link.source), find(link.target)
        if a != b:
            if a < b:
                parent[b] = a
            else:
                parent[a] = b
    roots = {n: find(n) for n in parent}
    # dense labels ordered by representative (smallest member) IRI
    order = {r: i for i, r in enumerate(sorted(set(roots.values())))}
    return GoldClustering(cid, relations, {n: order[r] for n, r in roots.items()})


def filter_min_size(gc: GoldClustering, threshold: int) -> set[str]:
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    sizes = gc.sizes
    return {n for n, lab in gc.labels.items() if sizes[lab] >= threshold}


@dataclass
class FoldSplit:
    fold_index: int
    train: set[str]
    val: set[str]
    test: set[str]


def assign_folds(gc: GoldClustering, seed: int) -> dict[str, int]:
    """Map every node to a fold in 0..4.

    Clusters larger than 5 nodes are shuffled and dealt round-robin, the
    dealing position carried across clusters from a seed-derived offset.
    Smaller clusters are placed uniformly at random.
    """
    rng = np.random.default_rng(seed)
    pointer = int(rng.integers(NUM_FOLDS))
    by_label: dict[int, list[str]] = {}
    for n, lab in sorted(gc.labels.items()):
        by_label.setdefault(lab, []).append(n)
    fold_of = {}
    for lab in sorted(by_label):
        members = by_label[lab]
        if len(members) > NUM_FOLDS:
            for idx in rng.permutation(len(members)):
                fold_of[members[idx]] = pointer % NUM_FOLDS
                pointer += 1
        else:
            for m in members:
                fold_of[m] = int(rng.integers(NUM_FOLDS))
    return fold_of


def folds_from_assignment(fold_of: dict[str, int]) -> list[FoldSplit]:
    parts = [set() for _ in range(NUM_FOLDS)]
    for n, f in fold_of.items():
        parts[f].add(n)
    out = []
    for k in range(NUM_FOLDS):
        val_k = (k + 1) % NUM_FOLDS
        train = set().union(*(parts[j] for j in range(NUM_FOLDS) if j not in (k, val_k)))
        out.append(FoldSplit(k + 1, train, set(parts[val_k]), set(parts[k])))
    return out


def split_folds(gc: GoldClustering, seed: int) -> list[FoldSplit]:
    """Five splits: fold k is the test set, fold k+1 (wrapping) the validation set."""
    return folds_from_assignment(assign_folds(gc, seed))


def save_gold(path, gc: GoldClustering, fold_of: dict[str, int] | None = None, seed: int | None = None) -> None:
    d = gc.to_dict()
    if fold_of is not None:
        d["folds"] = {n: fold_of[n] + 1 for n in sorted(fold_of)}
        d["fold_seed"] = seed
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(d, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_gold(path) -> tuple[GoldClustering, dict[str, int] | None]:
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    folds = d.get("folds")
    return GoldClustering.from_dict(d), ({n: f - 1 for n, f in folds.items()} if folds else None)
