import json
import random
from collections import Counter

import pytest

from kgmatch.alignment import (
    GOLD_CLUSTERINGS,
    AlignmentLink,
    AlignmentRelation as R,
    GoldClustering,
    assign_folds,
    compute_gold_clustering,
    filter_min_size,
    folds_from_assignment,
    load_gold,
    save_gold,
    split_folds,
    strip_alignments,
)
from kgmatch.graph import OWL, SKOS, KnowledgeGraph

from conftest import iri


def test_strip_removes_s_internal_links():
    g = KnowledgeGraph()
    g.add(iri("s1"), SKOS + "closeMatch", iri("s2"))
    g.add(iri("s1"), iri("p"), iri("x"))
    out, links = strip_alignments(g, {iri("s1"), iri("s2")})
    assert out.iri_triples() == {(iri("s1"), iri("p"), iri("x"))}
    assert links == [AlignmentLink(iri("s1"), iri("s2"), R.CLOSE_MATCH)]


def test_strip_identity_without_links():
    g = KnowledgeGraph()
    g.add(iri("a"), iri("p"), iri("b"))
    out, links = strip_alignments(g, {iri("a")})
    assert out.iri_triples() == g.iri_triples() and links == []


def test_strip_keeps_sameas_outside_s():
    g = KnowledgeGraph()
    g.add(iri("d1"), OWL + "sameAs", iri("d2"))
    g.add(iri("s1"), OWL + "sameAs", iri("d1"))
    out, links = strip_alignments(g, {iri("s1"), iri("s2")})
    assert out.iri_triples() == g.iri_triples() and links == []


def test_relation_iris_round_trip():
    for rel in R:
        assert R.from_iri(rel.iri) is rel
    assert R.SAME_AS.iri == OWL + "sameAs"
    assert not R.BROAD_MATCH.symmetric and not R.RELATED.transitive
    with pytest.raises(ValueError):
        R.from_iri(iri("nope"))
    with pytest.raises(ValueError):
        AlignmentLink("a", "a", R.RELATED)


def test_gold_examples():
    links = [AlignmentLink("a", "b", R.SAME_AS), AlignmentLink("b", "c", R.RELATED)]
    c0 = compute_gold_clustering(links, "C0", "abc")
    assert len(set(c0.labels.values())) == 1
    c2 = compute_gold_clustering(links, "c2", "abc")
    assert c2.labels["a"] == c2.labels["b"] != c2.labels["c"]
    c6 = compute_gold_clustering([AlignmentLink("x", "y", R.BROAD_MATCH)], "C6", "xy")
    assert c6.labels["x"] == c6.labels["y"]


def test_gold_table():
    assert GOLD_CLUSTERINGS["C0"] == frozenset(R)
    assert GOLD_CLUSTERINGS["C1"] == frozenset(R) - {R.BROAD_MATCH}
    assert [len(GOLD_CLUSTERINGS[f"C{i}"]) for i in range(2, 7)] == [1] * 5
    with pytest.raises(ValueError):
        compute_gold_clustering([], "C7", "a")


def _reachable(start, links):
    adj = {}
    for a, b in links:
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)
    seen, stack = {start}, [start]
    while stack:
        for y in adj.get(stack.pop(), ()):
            if y not in seen:
                seen.add(y)
                stack.append(y)
    return seen


def test_components_against_path_search():
    r = random.Random(0)
    for _ in range(60):
        nodes = [f"n{i:02d}" for i in range(r.randint(1, 40))]
        links = []
        for _ in range(r.randint(0, 100 if len(nodes) > 1 else 0)):
            a, b = r.sample(nodes, 2)
            links.append(AlignmentLink(a, b, r.choice(list(R))))
        for cid, rels in GOLD_CLUSTERINGS.items():
            gc = compute_gold_clustering(links, cid, nodes)
            assert set(gc.labels) == set(nodes)
            sel = [(l.source, l.target) for l in links if l.relation in rels]
            for a in nodes:
                reach = _reachable(a, sel)
                assert {b for b in nodes if gc.labels[b] == gc.labels[a]} == reach
            # dense labels ordered by smallest member
            reps = sorted(min(gc.members(lab)) for lab in set(gc.labels.values()))
            assert [gc.labels[x] for x in reps] == list(range(len(reps)))


def test_isolated_nodes_are_singletons():
    gc = compute_gold_clustering([], "C0", ["a", "b"])
    assert gc.cluster_sizes == {1: 2}


def _clusters(sizes):
    labels = {}
    for lab, size in enumerate(sizes):
        for m in range(size):
            labels[f"c{lab}_{m:02d}"] = lab
    return GoldClustering("C0", GOLD_CLUSTERINGS["C0"], labels)


def test_filter_examples_and_monotone():
    gc = _clusters([12, 9])
    assert filter_min_size(gc, 10) == {n for n in gc.labels if n.startswith("c0_")}
    assert filter_min_size(gc, 1) == set(gc.labels)
    gc = _clusters([1, 2, 3, 5, 8, 13, 2])
    prev = None
    for t in range(1, 15):
        kept = filter_min_size(gc, t)
        assert len({gc.labels[n] for n in kept}) == sum(
            1 for lab in set(gc.labels.values()) if gc.sizes[lab] >= t)
        if prev is not None:
            assert kept <= prev
        prev = kept
    with pytest.raises(ValueError):
        filter_min_size(gc, 0)


@pytest.mark.parametrize("seed", range(5))
def test_ten_node_cluster_two_per_fold(seed):
    counts = Counter(assign_folds(_clusters([10]), seed).values())
    assert sorted(counts.values()) == [2] * 5


@pytest.mark.parametrize("seed", range(5))
def test_twelve_node_cluster(seed):
    fold_of = assign_folds(_clusters([12]), seed)
    counts = Counter(fold_of.values())
    assert sorted(counts.values(), reverse=True) == [3, 3, 2, 2, 2]


def test_deal_out_oracle_many_clusters():
    gc = _clusters([12, 7, 23, 10, 3, 1, 6])
    for seed in range(10):
        fold_of = assign_folds(gc, seed)
        big = [n for n in fold_of if gc.sizes[gc.labels[n]] > 5]
        for lab in set(gc.labels.values()):
            if gc.sizes[lab] > 5:
                c = Counter(fold_of[n] for n in gc.members(lab))
                assert max(c.values()) - min(c.get(k, 0) for k in range(5)) <= 1
        total = Counter(fold_of[n] for n in big)
        assert max(total.values()) - min(total.values()) <= 1
        assert set(fold_of.values()) <= set(range(5))


def test_fold_roles():
    splits = split_folds(_clusters([10, 12, 4]), 3)
    assert [s.fold_index for s in splits] == [1, 2, 3, 4, 5]
    assert splits[4].val == splits[0].test
    for k, s in enumerate(splits):
        assert s.val == splits[(k + 1) % 5].test
        assert not (s.train & s.val or s.train & s.test or s.val & s.test)
        assert s.train | s.val | s.test == set(_clusters([10, 12, 4]).labels)


def test_folds_deterministic_and_seed_dependent():
    gc = _clusters([10, 12, 7, 3])
    assert assign_folds(gc, 1) == assign_folds(gc, 1)
    assert any(assign_folds(gc, 1) != assign_folds(gc, s) for s in range(2, 6))


def test_gold_json_round_trip(tmp_path):
    gc = _clusters([10, 2])
    fold_of = assign_folds(gc, 0)
    save_gold(tmp_path / "g.json", gc, fold_of, seed=0)
    back, folds = load_gold(tmp_path / "g.json")
    assert back.labels == gc.labels and folds == fold_of
    assert set(json.loads((tmp_path / "g.json").read_text())["folds"].values()) <= set(range(1, 6))
    assert folds_from_assignment(folds)[0].test == {n for n, f in fold_of.items() if f == 0}
