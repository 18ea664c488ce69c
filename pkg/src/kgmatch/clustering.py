"""Ward, single-linkage and OPTICS clustering of embedding rows."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.hierarchy import linkage
from scipy.spatial.distance import pdist, squareform
from sklearn.cluster import cluster_optics_xi

ALGORITHMS = ("ward", "single", "optics")
DEFAULT_XI = 0.05


class ClusteringParameterError(ValueError):
    pass


@dataclass
class ClusterAssignment:
    labels: np.ndarray            # dense labels from 0, in order of first appearance
    algorithm: str
    parameter: int
    nodes: list[str] | None = None
    meta: dict = field(default_factory=dict)

    @property
    def num_clusters(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def as_dict(self) -> dict[str, int]:
        if self.nodes is None:
            raise ValueError("assignment has no node names")
        return dict(zip(self.nodes, self.labels.tolist()))


def dense_labels(raw) -> np.ndarray:
    """Relabel to 0..k-1 by order of first appearance."""
    mapping: dict = {}
    return np.asarray([mapping.setdefault(x, len(mapping)) for x in np.asarray(raw).tolist()],
                      dtype=np.int64)


def _check_k(points: np.ndarray, k: int) -> None:
    if k < 1 or k > len(points):
        raise ClusteringParameterError(f"cannot form {k} clusters from {len(points)} points")


def cut_linkage(merges: np.ndarray, n: int, k: int) -> np.ndarray:
    """Apply the first n-k merges of a linkage matrix and return dense labels."""
    parent = list(range(2 * n - 1))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for step in range(n - k):
        a, b = int(merges[step, 0]), int(merges[step, 1])
        parent[find(a)] = n + step
        parent[find(b)] = n + step
    return dense_labels([find(i) for i in range(n)])


def _agglomerate(points, k: int, method: str, nodes) -> ClusterAssignment:
    points = np.asarray(points, dtype=np.float64)
    _check_k(points, k)
    n = len(points)
    if n == 1:
        labels = np.zeros(1, dtype=np.int64)
    else:
        labels = cut_linkage(linkage(points, method=method, metric="euclidean"), n, k)
    return ClusterAssignment(labels, method, k, nodes)


def ward_cluster(points, k: int, nodes=None) -> ClusterAssignment:
    """Agglomerate under the Ward criterion until ``k`` clusters remain."""
    return _agglomerate(points, k, "ward", nodes)


def single_cluster(points, k: int, nodes=None) -> ClusterAssignment:
    """Single-linkage agglomeration down to ``k`` clusters."""
    return _agglomerate(points, k, "single", nodes)


@dataclass
class OpticsOrdering:
    ordering: np.ndarray
    reachability: np.ndarray
    core_distances: np.ndarray
    predecessor: np.ndarray


def optics_ordering(points, min_samples: int) -> OpticsOrdering:
    """OPTICS cluster ordering with unbounded eps on Euclidean distances.

    The next point is the unprocessed one with the smallest reachability,
    lowest index first on ties. Core distance counts the point itself.
    """
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if not 1 <= min_samples <= n:
        raise ClusteringParameterError(f"min_samples={min_samples} with {n} points")
    dist = squareform(pdist(points)) if n > 1 else np.zeros((1, 1))
    core = np.partition(dist, min_samples - 1, axis=1)[:, min_samples - 1]
    reach = np.full(n, np.inf)
    pred = np.full(n, -1, dtype=np.int64)
    processed = np.zeros(n, dtype=bool)
    ordering = np.empty(n, dtype=np.int64)
    for pos in range(n):
        unproc = np.flatnonzero(~processed)
        p = unproc[np.argmin(reach[unproc])]
        processed[p] = True
        ordering[pos] = p
        rest = unproc[unproc != p]
        if not len(rest):
            break
        cand = np.maximum(dist[p, rest], core[p])
        better = cand < reach[rest]
        reach[rest[better]] = cand[better]
        pred[rest[better]] = p
    return OpticsOrdering(ordering, reach, core, pred)


def optics_cluster(points, min_cluster_size: int, xi: float = DEFAULT_XI, nodes=None) -> ClusterAssignment:
    """OPTICS with min_samples = min_cluster_size and xi-steep extraction.

    Noise points each get their own singleton label. ``min_cluster_size`` is
    clamped to the number of points.
    """
    points = np.asarray(points, dtype=np.float64)
    if min_cluster_size < 2:
        raise ClusteringParameterError("min_cluster_size must be >= 2")
    n = len(points)
    meta = {"xi": xi, "requested_min_cluster_size": min_cluster_size}
    m = min(min_cluster_size, n)
    if n < 2:
        return ClusterAssignment(np.zeros(n, dtype=np.int64), "optics", min_cluster_size, nodes, meta)
    order = optics_ordering(points, m)
    raw, _ = cluster_optics_xi(reachability=order.reachability, predecessor=order.predecessor,
                               ordering=order.ordering, min_samples=m, min_cluster_size=m, xi=xi)
    raw = raw.copy()
    noise = np.flatnonzero(raw < 0)
    meta["noise_points"] = int(len(noise))
    next_label = raw.max() + 1 if len(raw) else 0
    for i in noise:
        raw[i] = next_label
        next_label += 1
    return ClusterAssignment(dense_labels(raw), "optics", min_cluster_size, nodes, meta)


def run_algorithm(name: str, points, parameter: int, nodes=None, xi: float = DEFAULT_XI) -> ClusterAssignment:
    if name == "ward":
        return ward_cluster(points, parameter, nodes)
    if name == "single":
        return single_cluster(points, parameter, nodes)
    if name == "optics":
        return optics_cluster(points, parameter, xi, nodes)
    raise ValueError(f"unknown clustering algorithm {name!r}")


def write_assignment_csv(path, assignment: ClusterAssignment) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "label"])
        for node, lab in zip(assignment.nodes, assignment.labels.tolist()):
            w.writerow([node, lab])
