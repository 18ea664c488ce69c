"""Relational GCN encoder with basis-decomposed predicate weights.

Layer update for node i::

    h_i' = act( sum_r sum_{j in N_i^r} W_r h_j / c_ir + W0 h_i ),   W_r = sum_b a_rb V_b

The first layer is featureless: its input is the identity, so ``W h_j`` is
just column j of ``W`` and the identity is never built.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from .graph import KnowledgeGraph


class ShapeError(ValueError):
    pass


ACTIVATIONS = ("tanh", "linear")


@dataclass(frozen=True)
class GcnConfig:
    hidden_dims: tuple[int, ...] = (16, 16, 16)
    activations: tuple[str, ...] = ("tanh", "tanh", "linear")
    num_bases: int = 10
    normalization: str = "neighbors"  # c_ir = |N_i^r|; "none" gives c_ir = 1

    def __post_init__(self):
        if self.num_bases < 1:
            raise ValueError("num_bases must be >= 1")
        if len(self.hidden_dims) != len(self.activations):
            raise ValueError("one activation per layer required")
        if any(d < 1 for d in self.hidden_dims):
            raise ValueError("layer dimensions must be positive")
        if any(a not in ACTIVATIONS for a in self.activations):
            raise ValueError(f"activations must be among {ACTIVATIONS}")
        if self.normalization not in ("neighbors", "none"):
            raise ValueError("normalization must be 'neighbors' or 'none'")

    def layer_dims(self, num_nodes: int) -> list[int]:
        return [num_nodes, *self.hidden_dims]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> GcnConfig:
        return cls(tuple(d["hidden_dims"]), tuple(d["activations"]), int(d["num_bases"]),
                   d.get("normalization", "neighbors"))


@dataclass
class LayerParams:
    bases: np.ndarray         # (B, d_out, d_in)
    coefficients: np.ndarray  # (R, B)
    self_weight: np.ndarray   # (d_out, d_in)

    @property
    def arrays(self) -> list[np.ndarray]:
        return [self.bases, self.coefficients, self.self_weight]

    @property
    def size(self) -> int:
        return sum(a.size for a in self.arrays)

    def copy(self) -> LayerParams:
        return LayerParams(self.bases.copy(), self.coefficients.copy(), self.self_weight.copy())

    def composed(self) -> np.ndarray:
        """All predicate weights at once, shape (R, d_out, d_in)."""
        return np.einsum("rb,boi->roi", self.coefficients, self.bases)


def compose_weight(layer: LayerParams, r: int) -> np.ndarray:
    """W_r = sum_b a_rb V_b."""
    if not 0 <= r < layer.coefficients.shape[0]:
        raise LookupError(f"unknown predicate id {r}")
    return np.tensordot(layer.coefficients[r], layer.bases, axes=1)


@dataclass
class GraphOperator:
    """Row-normalized per-predicate adjacency, concatenated as one (n, R*n) sparse matrix.

    Row i of block r holds 1/c_ir at every column j in N_i^r, so the
    neighbor sum of the layer update becomes one sparse product.
    """

    num_nodes: int
    num_predicates: int
    adjacency: sp.csr_matrix
    adjacency_t: sp.csr_matrix = field(repr=False)

    @classmethod
    def from_graph(cls, g: KnowledgeGraph, normalization: str = "neighbors") -> GraphOperator:
        n, R = len(g.nodes), len(g.predicates)
        rows, cols, vals = [], [], []
        for r, (src, dst) in sorted(g.edge_arrays().items()):
            if not len(src):
                continue
            if normalization == "neighbors":
                deg = np.bincount(src, minlength=n).astype(np.float64)
                w = 1.0 / deg[src]
            else:
                w = np.ones(len(src))
            rows.append(src)
            cols.append(dst + r * n)
            vals.append(w)
        if rows:
            rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
            vals = np.zeros(0)
        A = sp.csr_matrix((vals, (rows, cols)), shape=(n, R * n))
        A.sort_indices()
        At = A.T.tocsr()
        At.sort_indices()
        return cls(n, R, A, At)

    def block(self, r: int) -> sp.csr_matrix:
        n = self.num_nodes
        return self.adjacency[:, r * n:(r + 1) * n]


def init_params(config: GcnConfig, op: GraphOperator, seed: int) -> list[LayerParams]:
    """Glorot-uniform initialization of bases, coefficients and self weights."""
    rng = np.random.default_rng(seed)
    dims = config.layer_dims(op.num_nodes)
    B, R = config.num_bases, op.num_predicates
    layers = []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        lim_w = np.sqrt(6.0 / (d_in + d_out))
        lim_a = np.sqrt(6.0 / (R + B)) if R else 1.0
        bases = rng.uniform(-lim_w, lim_w, size=(B, d_out, d_in))
        coefficients = rng.uniform(-lim_a, lim_a, size=(R, B))
        self_weight = rng.uniform(-lim_w, lim_w, size=(d_out, d_in))
        layers.append(LayerParams(bases, coefficients, self_weight))
    return layers


def param_count(config: GcnConfig, num_nodes: int, num_predicates: int) -> int:
    dims = config.layer_dims(num_nodes)
    B = config.num_bases
    return sum(B * o * i + num_predicates * B + o * i for i, o in zip(dims[:-1], dims[1:]))


def _check_shapes(op: GraphOperator, params: list[LayerParams], config: GcnConfig) -> None:
    dims = config.layer_dims(op.num_nodes)
    if len(params) != len(dims) - 1:
        raise ShapeError(f"expected {len(dims) - 1} layers, got {len(params)}")
    for l, (layer, d_in, d_out) in enumerate(zip(params, dims[:-1], dims[1:])):
        expect = [(config.num_bases, d_out, d_in), (op.num_predicates, config.num_bases), (d_out, d_in)]
        got = [a.shape for a in layer.arrays]
        if got != expect:
            raise ShapeError(f"layer {l}: parameter shapes {got} do not match {expect}")


@dataclass
class Tape:
    """Intermediates of one forward pass: per-layer inputs and pre-activations."""

    op: GraphOperator
    params: list[LayerParams]
    config: GcnConfig
    inputs: list[np.ndarray | None]  # None stands for the implicit identity input
    preactivations: list[np.ndarray]
    outputs: list[np.ndarray]

    def nbytes(self) -> int:
        arrays = [x for x in self.inputs if x is not None] + self.preactivations
        return sum(a.nbytes for a in arrays)


def _act(z: np.ndarray, name: str) -> np.ndarray:
    return np.tanh(z) if name == "tanh" else z


def _layer(op: GraphOperator, layer: LayerParams, h: np.ndarray | None) -> np.ndarray:
    n, R = op.num_nodes, op.num_predicates
    W = layer.composed()  # (R, d_out, d_in)
    d_out = W.shape[1]
    if h is None:
        # identity input: H W_r^T is W_r^T, H W0^T is W0^T (column lookup)
        Y = np.ascontiguousarray(W.transpose(0, 2, 1)).reshape(R * n, d_out)
        self_term = layer.self_weight.T
    else:
        Y = np.einsum("nd,rod->rno", h, W).reshape(R * n, d_out)
        self_term = h @ layer.self_weight.T
    return op.adjacency @ Y + self_term


def forward_with_tape(op: GraphOperator, params: list[LayerParams], config: GcnConfig
                      ) -> tuple[list[np.ndarray], Tape]:
    _check_shapes(op, params, config)
    h = None
    inputs, pre, outs = [], [], []
    for layer, act in zip(params, config.activations):
        inputs.append(h)
        z = _layer(op, layer, h)
        h = _act(z, act)
        pre.append(z)
        outs.append(h)
    return outs, Tape(op, params, config, inputs, pre, outs)


def forward(op: GraphOperator, params: list[LayerParams], config: GcnConfig) -> list[np.ndarray]:
    """Embeddings of every node after each layer; the last entry is the output."""
    return forward_with_tape(op, params, config)[0]


def backward_gcn(tape: Tape, d_out: np.ndarray) -> list[LayerParams]:
    """Gradients of all layer parameters given dLoss/d(final embeddings)."""
    op, n, R = tape.op, tape.op.num_nodes, tape.op.num_predicates
    grads: list[LayerParams] = [None] * len(tape.params)  # type: ignore[list-item]
    dh = d_out
    for l in reversed(range(len(tape.params))):
        layer, h, z = tape.params[l], tape.inputs[l], tape.preactivations[l]
        dz = dh * (1.0 - np.tanh(z) ** 2) if tape.config.activations[l] == "tanh" else dh
        d_o = dz.shape[1]
        dY = (op.adjacency_t @ dz).reshape(R, n, d_o)
        if h is None:
            dW = dY.transpose(0, 2, 1)            # (R, d_out, n)
            dW0 = dz.T.copy()
        else:
            dW = np.einsum("rno,nd->rod", dY, h)
            dW0 = dz.T @ h
        dV = np.einsum("rb,roi->boi", layer.coefficients, dW)
        da = np.einsum("roi,boi->rb", dW, layer.bases)
        grads[l] = LayerParams(dV, da, dW0)
        if l > 0:
            W = layer.composed()
            dh = dz @ layer.self_weight + np.einsum("rno,roi->ni", dY, W)
    return grads


# -- persistence ---------------------------------------------------------------

def save_checkpoint(path, params: list[LayerParams], config: GcnConfig, seed: int,
                    extra: dict | None = None) -> None:
    """JSON checkpoint; float repr keeps values bit-exact."""
    doc = {
        "format": "kgmatch-gcn-checkpoint/1",
        "config": config.to_dict(),
        "seed": seed,
        "layers": [
            {
                "shapes": {k: list(a.shape) for k, a in zip(("bases", "coefficients", "self_weight"),
                                                            layer.arrays)},
                "bases": layer.bases.ravel().tolist(),
                "coefficients": layer.coefficients.ravel().tolist(),
                "self_weight": layer.self_weight.ravel().tolist(),
            }
            for layer in params
        ],
    }
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, separators=(",", ":"))
        fh.write("\n")


def load_checkpoint(path) -> tuple[list[LayerParams], GcnConfig, dict]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    layers = []
    for entry in doc["layers"]:
        shp = entry["shapes"]
        layers.append(LayerParams(
            np.asarray(entry["bases"], dtype=np.float64).reshape(shp["bases"]),
            np.asarray(entry["coefficients"], dtype=np.float64).reshape(shp["coefficients"]),
            np.asarray(entry["self_weight"], dtype=np.float64).reshape(shp["self_weight"]),
        ))
    return layers, GcnConfig.from_dict(doc["config"]), doc


def write_embeddings_csv(path, node_iris: list[str], embeddings: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node"] + [f"h{k}" for k in range(embeddings.shape[1])])
        for iri, row in zip(node_iris, embeddings):
            w.writerow([iri] + [repr(float(x)) for x in row])


def read_embeddings_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return [r[0] for r in rows], np.asarray([[float(x) for x in r[1:]] for r in rows], dtype=np.float64)
