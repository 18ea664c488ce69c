"""Clustering metrics (ACC, ARI, NMI), fold aggregation and distance analysis."""
from __future__ import annotations

import csv
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import comb

from .alignment import AlignmentLink, AlignmentRelation
from .clustering import ClusterAssignment

METRICS = ("acc", "ari", "nmi")
NMI_MEANS = {
    "arithmetic": lambda a, b: 0.5 * (a + b),
    "geometric": lambda a, b: float(np.sqrt(a * b)),
    "max": max,
    "min": min,
}


class NodeSetMismatch(ValueError):
    pass


def _as_labels(x):
    if isinstance(x, ClusterAssignment):
        return x.as_dict() if x.nodes is not None else x.labels
    return x


def _align(pred, gold) -> tuple[np.ndarray, np.ndarray]:
    pred, gold = _as_labels(pred), _as_labels(gold)
    if isinstance(pred, Mapping) or isinstance(gold, Mapping):
        if not (isinstance(pred, Mapping) and isinstance(gold, Mapping)):
            raise TypeError("pass both labelings as mappings or both as sequences")
        if pred.keys() != gold.keys():
            raise NodeSetMismatch(
                f"{len(pred.keys() - gold.keys())} predicted-only and "
                f"{len(gold.keys() - pred.keys())} gold-only nodes")
        keys = sorted(pred)
        pred, gold = [pred[k] for k in keys], [gold[k] for k in keys]
    pred, gold = np.asarray(pred), np.asarray(gold)
    if pred.shape != gold.shape:
        raise NodeSetMismatch(f"{len(pred)} predicted vs {len(gold)} gold labels")
    return pred, gold


def contingency(pred, gold) -> np.ndarray:
    """Counts n_ij of nodes with gold label i and predicted label j."""
    pred, gold = _align(pred, gold)
    _, p = np.unique(pred, return_inverse=True)
    _, g = np.unique(gold, return_inverse=True)
    table = np.zeros((g.max() + 1 if len(g) else 0, p.max() + 1 if len(p) else 0), dtype=np.int64)
    np.add.at(table, (g, p), 1)
    return table


def accuracy(pred, gold) -> float:
    """Fraction of nodes correctly labeled under the best one-to-one label mapping."""
    table = contingency(pred, gold)
    n = table.sum()
    if n == 0:
        return 1.0
    rows, cols = linear_sum_assignment(table, maximize=True)
    return float(table[rows, cols].sum() / n)


def adjusted_rand_index(pred, gold) -> float:
    table = contingency(pred, gold)
    n = int(table.sum())
    sum_cells = comb(table, 2).sum()
    sum_rows = comb(table.sum(axis=1), 2).sum()
    sum_cols = comb(table.sum(axis=0), 2).sum()
    total = comb(n, 2)
    expected = sum_rows * sum_cols / total if total else 0.0
    max_index = 0.5 * (sum_rows + sum_cols)
    if max_index == expected:
        # degenerate: both partitions trivial in the same way, or n < 2
        return 1.0 if _same_partition(table) else 0.0
    return float((sum_cells - expected) / (max_index - expected))


def _same_partition(table: np.ndarray) -> bool:
    return bool(np.all((table > 0).sum(axis=0) <= 1) and np.all((table > 0).sum(axis=1) <= 1))


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def normalized_mutual_information(pred, gold, mean: str = "arithmetic") -> float:
    """Mutual information over a mean of both entropies (natural log), arithmetic by default."""
    if mean not in NMI_MEANS:
        raise ValueError(f"unknown entropy mean {mean!r}")
    table = contingency(pred, gold)
    n = int(table.sum())
    if n == 0:
        return 1.0
    h_gold = _entropy(table.sum(axis=1), n)
    h_pred = _entropy(table.sum(axis=0), n)
    if h_gold == 0.0 and h_pred == 0.0:
        return 1.0
    nz = table > 0
    pij = table[nz] / n
    outer = np.outer(table.sum(axis=1), table.sum(axis=0))[nz] / (n * n)
    mi = float((pij * np.log(pij / outer)).sum())
    denom = NMI_MEANS[mean](h_gold, h_pred)
    if denom == 0.0:
        return 0.0
    return float(min(max(mi / denom, 0.0), 1.0))


def score(pred, gold, nmi_mean: str = "arithmetic") -> dict[str, float]:
    return {
        "acc": accuracy(pred, gold),
        "ari": adjusted_rand_index(pred, gold),
        "nmi": normalized_mutual_information(pred, gold, nmi_mean),
    }


@dataclass
class MetricReport:
    per_fold: dict[str, list[float]]
    mean: dict[str, float] = field(default_factory=dict)
    std: dict[str, float] = field(default_factory=dict)

    def formatted(self, metric: str) -> str:
        return f"{self.mean[metric]:.2f} ± {self.std[metric]:.2f}"

    def to_dict(self) -> dict:
        return {
            "per_fold": self.per_fold,
            "mean": self.mean,
            "std": self.std,
            "formatted": {m: self.formatted(m) for m in self.mean},
        }


def cross_validated_report(per_fold: list[dict[str, float]], num_folds: int = 5) -> MetricReport:
    """Mean and population standard deviation of each metric across the folds."""
    if len(per_fold) != num_folds:
        raise ValueError(f"expected {num_folds} folds, got {len(per_fold)}")
    metrics = [m for m in METRICS if all(m in f for f in per_fold)]
    values = {m: [float(f[m]) for f in per_fold] for m in metrics}
    return MetricReport(
        values,
        {m: float(np.mean(v)) for m, v in values.items()},
        {m: float(np.std(v)) for m, v in values.items()},
    )


# -- distance analysis -----------------------------------------------------------

@dataclass
class DistanceDistribution:
    relation: AlignmentRelation
    pairs: list[tuple[str, str, float]]

    @property
    def distances(self) -> np.ndarray:
        return np.asarray([d for *_, d in self.pairs], dtype=np.float64)

    @property
    def empty(self) -> bool:
        return not self.pairs

    @property
    def summary(self) -> dict[str, float] | None:
        if self.empty:
            return None
        q1, med, q3 = np.percentile(self.distances, [25, 50, 75])
        d = self.distances
        return {"count": len(d), "min": float(d.min()), "q1": float(q1), "median": float(med),
                "q3": float(q3), "max": float(d.max())}


def distance_analysis(embeddings: Mapping[str, np.ndarray], links: list[AlignmentLink],
                      test_nodes) -> dict[AlignmentRelation, DistanceDistribution]:
    """Euclidean distances of linked pairs whose endpoints are both test nodes."""
    test_nodes = set(test_nodes)
    pairs: dict[AlignmentRelation, dict[tuple[str, str], float]] = {rel: {} for rel in AlignmentRelation}
    for link in links:
        if link.source not in test_nodes or link.target not in test_nodes:
            continue
        key = tuple(sorted((link.source, link.target)))
        d = float(np.linalg.norm(np.asarray(embeddings[key[0]]) - np.asarray(embeddings[key[1]])))
        pairs[link.relation][key] = d
    return {rel: DistanceDistribution(rel, sorted((a, b, d) for (a, b), d in found.items()))
            for rel, found in pairs.items()}


def write_distances_csv(path, distributions: dict[AlignmentRelation, DistanceDistribution],
                        fold: int | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("# distance: euclidean between final-layer embeddings\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fold", "relation", "source", "target", "distance"])
        for rel in AlignmentRelation:
            for a, b, d in distributions[rel].pairs:
                w.writerow(["" if fold is None else fold, rel.value, a, b, repr(d)])
