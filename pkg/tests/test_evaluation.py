import itertools
import math
import time
from collections import Counter

import numpy as np
import pytest

from kgmatch.alignment import AlignmentLink, AlignmentRelation as R
from kgmatch.evaluation import (
    NodeSetMismatch,
    accuracy,
    adjusted_rand_index,
    contingency,
    cross_validated_report,
    distance_analysis,
    normalized_mutual_information,
    score,
    write_distances_csv,
)


# -- direct-definition oracles -------------------------------------------------------------

def acc_bruteforce(pred, gold):
    p_labels, g_labels = sorted(set(pred)), sorted(set(gold))
    slots = g_labels + [None] * max(0, len(p_labels) - len(g_labels))
    best = 0
    for perm in itertools.permutations(slots, len(p_labels)):
        mapping = dict(zip(p_labels, perm))
        best = max(best, sum(mapping[p] == g for p, g in zip(pred, gold)))
    return best / len(pred)


def _same_partition(a, b):
    pairs = list(itertools.combinations(range(len(a)), 2))
    return all((a[i] == a[j]) == (b[i] == b[j]) for i, j in pairs)


def ari_pairs(pred, gold):
    n = len(pred)
    together_both = together_pred = together_gold = 0
    for i, j in itertools.combinations(range(n), 2):
        tp, tg = pred[i] == pred[j], gold[i] == gold[j]
        together_pred += tp
        together_gold += tg
        together_both += tp and tg
    total = n * (n - 1) / 2
    expected = together_pred * together_gold / total if total else 0.0
    maximum = (together_pred + together_gold) / 2
    if maximum == expected:
        return 1.0 if _same_partition(pred, gold) else 0.0
    return (together_both - expected) / (maximum - expected)


def nmi_direct(pred, gold, mean="arithmetic"):
    n = len(pred)
    cp, cg, cj = Counter(pred), Counter(gold), Counter(zip(pred, gold))
    h_p = -sum(c / n * math.log(c / n) for c in cp.values())
    h_g = -sum(c / n * math.log(c / n) for c in cg.values())
    if h_p == 0 and h_g == 0:
        return 1.0
    mi = 0.0
    for (a, b), c in cj.items():
        mi += c / n * math.log((c / n) / ((cp[a] / n) * (cg[b] / n)))
    denom = {"arithmetic": (h_p + h_g) / 2, "geometric": math.sqrt(h_p * h_g),
             "max": max(h_p, h_g), "min": min(h_p, h_g)}[mean]
    return 0.0 if denom == 0 else mi / denom


def _random_instance(rng):
    n = int(rng.integers(1, 13))
    return rng.integers(0, int(rng.integers(1, 7)), size=n).tolist(), rng.integers(0, int(rng.integers(1, 7)), size=n).tolist()


def test_metric_oracles_random_instances():
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    for _ in range(1000):
        pred, gold = _random_instance(rng)
        assert accuracy(pred, gold) == pytest.approx(acc_bruteforce(pred, gold), abs=1e-15)
        assert abs(adjusted_rand_index(pred, gold) - ari_pairs(pred, gold)) <= 1e-12
        assert abs(normalized_mutual_information(pred, gold) - nmi_direct(pred, gold)) <= 1e-12
    assert time.perf_counter() - t0 < 60


@pytest.mark.parametrize("mean", ["arithmetic", "geometric", "max", "min"])
def test_nmi_means(mean):
    rng = np.random.default_rng(1)
    for _ in range(200):
        pred, gold = _random_instance(rng)
        got = normalized_mutual_information(pred, gold, mean)
        assert abs(got - min(max(nmi_direct(pred, gold, mean), 0.0), 1.0)) <= 1e-12


def test_properties():
    rng = np.random.default_rng(2)
    for _ in range(300):
        pred, gold = _random_instance(rng)
        renamed = [{v: 10 - v for v in set(pred)}[p] for p in pred]
        s = score(pred, gold)
        assert 0 <= s["acc"] <= 1 and 0 <= s["nmi"] <= 1 and -1 <= s["ari"] <= 1
        assert score(renamed, gold) == pytest.approx(s, abs=1e-12)
        assert adjusted_rand_index(gold, pred) == pytest.approx(s["ari"], abs=1e-12)
        assert normalized_mutual_information(gold, pred) == pytest.approx(s["nmi"], abs=1e-12)


def test_acc_examples():
    assert accuracy([2, 2, 0, 0, 1], [0, 0, 1, 1, 2]) == 1.0
    assert accuracy([0] * 6, [0, 0, 0, 1, 1, 1]) == 0.5


def test_ari_worked_example():
    gold = {"a": 0, "b": 0, "c": 1, "d": 1}
    pred = {"a": 0, "b": 0, "c": 0, "d": 1}
    t = contingency(pred, gold)
    assert sum(math.comb(int(x), 2) for x in t.ravel()) == 1
    assert adjusted_rand_index(pred, gold) == 0.0
    assert adjusted_rand_index(gold, gold) == 1.0


def test_ari_degenerate():
    assert adjusted_rand_index([0, 0, 0], [5, 5, 5]) == 1.0
    assert adjusted_rand_index([0, 1, 2], [0, 1, 2]) == 1.0
    assert adjusted_rand_index([0], [0]) == 1.0


def test_ari_random_labelings_center_on_zero():
    values = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        values.append(adjusted_rand_index(rng.integers(0, 8, 200), rng.integers(0, 8, 200)))
    assert abs(np.mean(values)) <= 0.02


def test_nmi_examples():
    assert normalized_mutual_information([1, 1, 0, 0], [0, 0, 1, 1]) == pytest.approx(1.0)
    assert normalized_mutual_information([0, 0, 0, 0], [0, 0, 1, 1]) == 0.0
    assert normalized_mutual_information([0, 0], [3, 3]) == 1.0
    with pytest.raises(ValueError):
        normalized_mutual_information([0], [0], mean="harmonic")


def test_node_set_mismatch():
    with pytest.raises(NodeSetMismatch):
        accuracy({"a": 0}, {"b": 0})
    with pytest.raises(NodeSetMismatch):
        score([0, 1], [0])


def test_report_arithmetic():
    r = cross_validated_report([{"acc": v, "ari": v, "nmi": v} for v in (0, 0, 0, 0, 1)])
    assert r.formatted("acc") == "0.20 ± 0.40"
    r = cross_validated_report([{"acc": 0.73, "ari": 0.5, "nmi": 0.1}] * 5)
    assert r.formatted("acc") == "0.73 ± 0.00"
    assert set(r.to_dict()["formatted"]) == {"acc", "ari", "nmi"}
    with pytest.raises(ValueError):
        cross_validated_report([{"acc": 1.0}] * 4)


def test_distances():
    emb = {"a": np.zeros(2), "b": np.zeros(2), "c": np.array([0.1, 0.0]), "d": np.array([1.0, 0.0]),
           "e": np.array([5.0, 5.0])}
    links = [AlignmentLink("a", "b", R.SAME_AS), AlignmentLink("b", "a", R.SAME_AS),
             AlignmentLink("a", "c", R.SAME_AS), AlignmentLink("a", "d", R.RELATED),
             AlignmentLink("a", "e", R.RELATED)]
    out = distance_analysis(emb, links, {"a", "b", "c", "d"})
    assert [p[:2] for p in out[R.SAME_AS].pairs] == [("a", "b"), ("a", "c")]
    assert out[R.SAME_AS].distances.tolist() == [0.0, 0.1]
    assert out[R.RELATED].distances.tolist() == [1.0]
    assert out[R.SAME_AS].summary["median"] < out[R.RELATED].summary["median"]
    assert out[R.BROAD_MATCH].empty and out[R.BROAD_MATCH].summary is None


def test_distances_csv(tmp_path):
    emb = {"a": np.zeros(2), "b": np.ones(2)}
    out = distance_analysis(emb, [AlignmentLink("b", "a", R.CLOSE_MATCH)], {"a", "b"})
    write_distances_csv(tmp_path / "d.csv", out, fold=3)
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[1] == "fold,relation,source,target,distance"
    assert lines[2].startswith("3,closeMatch,a,b,1.414")
