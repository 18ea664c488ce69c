import math

import numpy as np
import pytest
from sklearn.cluster import cluster_optics_xi

from kgmatch.clustering import (
    ClusteringParameterError,
    cut_linkage,
    dense_labels,
    optics_cluster,
    optics_ordering,
    run_algorithm,
    single_cluster,
    ward_cluster,
)


def same_partition(a, b) -> bool:
    return np.array_equal(dense_labels(a), dense_labels(b))


# -- oracles ---------------------------------------------------------------------------

def mst_cut_oracle(points, k):
    """Prim's MST, drop the k-1 heaviest edges, label components."""
    n = len(points)
    d = [[math.dist(p, q) for q in points] for p in points]
    in_tree = [False] * n
    best = [math.inf] * n
    link = [-1] * n
    best[0] = 0.0
    edges = []
    for _ in range(n):
        u = min((i for i in range(n) if not in_tree[i]), key=lambda i: best[i])
        in_tree[u] = True
        if link[u] >= 0:
            edges.append((best[u], link[u], u))
        for v in range(n):
            if not in_tree[v] and d[u][v] < best[v]:
                best[v], link[v] = d[u][v], u
    edges.sort()
    keep = edges[:n - k]
    comp = list(range(n))

    def find(x):
        while comp[x] != x:
            x = comp[x]
        return x

    for _, a, b in keep:
        comp[find(a)] = find(b)
    return [find(i) for i in range(n)]


def ward_oracle(points, k):
    """Naive agglomeration with the Lance-Williams update on squared distances."""
    n = len(points)
    X = np.asarray(points, dtype=float)
    D = ((X[:, None, :] - X[None, :, :]) ** 2).sum(-1)
    size = np.ones(n)
    active = list(range(n))
    members = {i: [i] for i in range(n)}
    while len(active) > k:
        best = None
        for ai, i in enumerate(active):
            for j in active[ai + 1:]:
                if best is None or D[i, j] < best[0]:
                    best = (D[i, j], i, j)
        _, i, j = best
        for m in active:
            if m in (i, j):
                continue
            t = size[m] + size[i] + size[j]
            D[i, m] = D[m, i] = ((size[m] + size[i]) * D[m, i] + (size[m] + size[j]) * D[m, j]
                                 - size[m] * D[i, j]) / t
        size[i] += size[j]
        members[i] += members.pop(j)
        active.remove(j)
    labels = [0] * n
    for lab, root in enumerate(sorted(members)):
        for x in members[root]:
            labels[x] = lab
    return labels


def optics_reference(points, min_samples):
    """Textbook OPTICS with an ordered seed list and unbounded eps, pure Python."""
    n = len(points)
    d = [[math.dist(p, q) for q in points] for p in points]
    core = [sorted(row)[min_samples - 1] for row in d]
    reach = [math.inf] * n
    done = [False] * n
    order = []
    for start in range(n):
        if done[start]:
            continue
        seeds = {start: math.inf}
        while seeds:
            p = min(seeds, key=lambda i: (seeds[i], i))
            del seeds[p]
            done[p] = True
            order.append(p)
            for q in range(n):
                if done[q]:
                    continue
                r = max(core[p], d[p][q])
                if r < reach[q]:
                    reach[q] = r
                    seeds[q] = r
    return order, reach, core


# -- single -------------------------------------------------------------------------------

def test_single_collinear_example():
    a = single_cluster(np.array([[0.0], [1.0], [2.0], [10.0]]), 2)
    assert same_partition(a.labels, [0, 0, 0, 1])
    assert same_partition(single_cluster(np.array([[0.0], [1.0], [5.0]]), 1).labels, [0, 0, 0])


def test_single_equals_mst_oracle():
    rng = np.random.default_rng(0)
    for trial in range(50):
        n = int(rng.integers(2, 201))
        X = rng.normal(size=(n, int(rng.integers(1, 6))))
        k = int(rng.integers(1, n + 1))
        assert same_partition(single_cluster(X, k).labels, mst_cut_oracle(X.tolist(), k)), trial


# -- ward ---------------------------------------------------------------------------------

def test_ward_equals_lance_williams_oracle():
    rng = np.random.default_rng(1)
    for trial in range(20):
        n = int(rng.integers(2, 101))
        X = rng.normal(size=(n, 3)) + rng.integers(0, 4, size=(n, 1)) * 4
        for k in sorted({1, 2, int(rng.integers(1, n + 1)), n}):
            assert same_partition(ward_cluster(X, k).labels, ward_oracle(X, k)), (trial, k)


def test_ward_extremes_and_blobs():
    rng = np.random.default_rng(2)
    X = np.r_[rng.normal(size=(20, 2)) * 0.1, rng.normal(size=(20, 2)) * 0.1 + 100]
    assert same_partition(ward_cluster(X, 2).labels, [0] * 20 + [1] * 20)
    assert ward_cluster(X, 40).num_clusters == 40
    assert ward_cluster(X, 1).num_clusters == 1


@pytest.mark.parametrize("fn", [ward_cluster, single_cluster])
def test_bad_k(fn):
    X = np.zeros((3, 2))
    for k in (0, 4):
        with pytest.raises(ClusteringParameterError):
            fn(X, k)


@pytest.mark.parametrize("method", ["ward", "single"])
def test_nested_cuts(method):
    X = np.random.default_rng(3).normal(size=(40, 4))
    prev = None
    for k in range(40, 0, -1):
        lab = run_algorithm(method, X, k).labels
        if prev is not None:
            # every k+1 cluster sits inside one k cluster
            for c in set(prev.tolist()):
                assert len(set(lab[prev == c].tolist())) == 1
        prev = lab


def test_cut_linkage_manual():
    # merges (0,1) -> 3, then (3,2) -> 4
    Z = np.array([[0, 1, 1.0, 2], [3, 2, 2.0, 3]])
    assert cut_linkage(Z, 3, 3).tolist() == [0, 1, 2]
    assert cut_linkage(Z, 3, 2).tolist() == [0, 0, 1]
    assert cut_linkage(Z, 3, 1).tolist() == [0, 0, 0]


# -- optics -------------------------------------------------------------------------------

def test_optics_ordering_equals_reference():
    rng = np.random.default_rng(4)
    for trial in range(25):
        n = int(rng.integers(2, 201))
        X = rng.normal(size=(n, 2)) + rng.integers(0, 3, size=(n, 1)) * 5
        m = int(rng.integers(1, min(n, 20) + 1))
        got = optics_ordering(X, m)
        order, reach, core = optics_reference(X.tolist(), m)
        assert got.ordering.tolist() == order, trial
        np.testing.assert_allclose(got.reachability, reach, rtol=1e-12)
        np.testing.assert_allclose(got.core_distances, core, rtol=1e-12)


def test_optics_two_blobs():
    rng = np.random.default_rng(5)
    X = np.r_[rng.normal(size=(20, 2)) * 0.1, rng.normal(size=(20, 2)) * 0.1 + 50]
    a = optics_cluster(X, 10)
    assert same_partition(a.labels, [0] * 20 + [1] * 20)
    assert a.meta["noise_points"] == 0


def test_optics_noise_gets_singletons():
    X = np.random.default_rng(0).uniform(size=(40, 2))
    a = optics_cluster(X, 10)
    order = optics_ordering(X, 10)
    raw, _ = cluster_optics_xi(reachability=order.reachability, predecessor=order.predecessor,
                               ordering=order.ordering, min_samples=10, min_cluster_size=10, xi=0.05)
    noise = np.flatnonzero(raw < 0)
    assert a.meta["noise_points"] == len(noise) > 0
    counts = np.bincount(a.labels)
    assert all(counts[a.labels[i]] == 1 for i in noise)
    clustered = np.flatnonzero(raw >= 0)
    assert same_partition(a.labels[clustered], raw[clustered])


def test_optics_duplicates_follow_originals():
    rng = np.random.default_rng(6)
    X = np.r_[rng.normal(size=(15, 2)) * 0.2, rng.normal(size=(15, 2)) * 0.2 + 30]
    base = optics_cluster(X, 10).labels
    dup = optics_cluster(np.r_[X, X], 10).labels
    assert np.array_equal(dup[:30], dup[30:])
    assert same_partition(dup[:30], base)


def test_optics_parameter_errors():
    with pytest.raises(ClusteringParameterError):
        optics_cluster(np.zeros((5, 2)), 1)
    with pytest.raises(ClusteringParameterError):
        optics_ordering(np.zeros((5, 2)), 6)
    with pytest.raises(ValueError):
        run_algorithm("kmeans", np.zeros((3, 2)), 2)


@pytest.mark.parametrize("method", ["ward", "single", "optics"])
def test_isometry_invariance(method):
    rng = np.random.default_rng(7)
    X = np.r_[rng.normal(size=(25, 3)), rng.normal(size=(25, 3)) + 6, rng.normal(size=(10, 3)) - 6]
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    Y = X @ Q.T + rng.normal(size=3) * 10
    param = 10 if method == "optics" else 3
    assert same_partition(run_algorithm(method, X, param).labels, run_algorithm(method, Y, param).labels)


def test_dense_labels():
    assert dense_labels([5, 5, 2, 9, 2]).tolist() == [0, 0, 1, 2, 1]
