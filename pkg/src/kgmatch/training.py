"""Soft Nearest Neighbor loss, exact gradients, Adam and early-stopped training."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .alignment import FoldSplit, GoldClustering
from .graph import KnowledgeGraph
from .model import (
    GcnConfig,
    GraphOperator,
    LayerParams,
    ShapeError,
    Tape,
    backward_gcn,
    forward,
    forward_with_tape,
    init_params,
)

log = logging.getLogger(__name__)

RHO_FLOOR = 1e-6


class SnnContractError(ValueError):
    """A batch node has no other node with the same label."""


class ConfigurationError(ValueError):
    pass


@dataclass
class SnnBatch:
    nodes: np.ndarray   # node ids into the embedding matrix
    labels: np.ndarray

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=np.int64)
        self.labels = np.asarray(self.labels)
        if self.nodes.shape != self.labels.shape:
            raise ValueError("one label per node required")
        # canonical order makes the loss independent of how the batch was listed
        order = np.argsort(self.nodes, kind="stable")
        self.nodes, self.labels = self.nodes[order], self.labels[order]
        if len(np.unique(self.nodes)) != len(self.nodes):
            raise ValueError("duplicate node in batch")

    def __len__(self) -> int:
        return len(self.nodes)

    def check(self) -> None:
        _, inv, counts = np.unique(self.labels, return_inverse=True, return_counts=True)
        lonely = self.nodes[counts[inv] < 2]
        if len(lonely):
            raise SnnContractError(f"nodes without a same-label peer: {lonely.tolist()}")


@dataclass
class TrainConfig:
    max_epochs: int = 200
    learning_rate: float = 0.01
    patience: int = 10
    min_delta: float = 1e-4
    initial_temperature: float = 1.0
    min_train_cluster_size: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.max_epochs < 0 or self.patience < 1:
            raise ValueError("max_epochs must be >= 0 and patience >= 1")
        if min(self.learning_rate, self.min_delta, self.initial_temperature) <= 0:
            raise ValueError("learning_rate, min_delta and initial_temperature must be positive")


def _snn_terms(x: np.ndarray, labels: np.ndarray, rho: float):
    diff = x[:, None, :] - x[None, :, :]
    dist = np.einsum("ijk,ijk->ij", diff, diff)
    m = len(x)
    off_diag = ~np.eye(m, dtype=bool)
    same = (labels[:, None] == labels[None, :]) & off_diag
    logits = -rho * dist
    lse_all = logsumexp(np.where(off_diag, logits, -np.inf), axis=1)
    lse_same = logsumexp(np.where(same, logits, -np.inf), axis=1)
    return dist, logits, off_diag, same, lse_all, lse_same


def snn_loss(h: np.ndarray, batch: SnnBatch, rho: float) -> float:
    """Mean over batch nodes of -log(same-label mass / all-pair mass) at inverse temperature ``rho``."""
    batch.check()
    if rho < RHO_FLOOR:
        raise ValueError(f"inverse temperature {rho} below floor {RHO_FLOOR}")
    *_, lse_all, lse_same = _snn_terms(h[batch.nodes], batch.labels, rho)
    return float(np.mean(lse_all - lse_same))


def snn_loss_and_grad(h: np.ndarray, batch: SnnBatch, rho: float) -> tuple[float, np.ndarray, float]:
    """Loss, dLoss/dh (full matrix, zero outside the batch) and dLoss/drho."""
    batch.check()
    x = h[batch.nodes]
    m = len(x)
    dist, logits, off_diag, same, lse_all, lse_same = _snn_terms(x, batch.labels, rho)
    loss = float(np.mean(lse_all - lse_same))
    p_all = np.where(off_diag, np.exp(logits - lse_all[:, None]), 0.0)
    p_same = np.where(same, np.exp(logits - lse_same[:, None]), 0.0)
    g = (p_all - p_same) / m          # dLoss/dlogits
    d_rho = float(-(g * dist).sum())
    d_dist = -rho * g
    s = d_dist + d_dist.T
    dx = 2.0 * (s.sum(axis=1)[:, None] * x - s @ x)
    dh = np.zeros_like(h)
    dh[batch.nodes] = dx
    return loss, dh, d_rho


def backward(tape: Tape, batch: SnnBatch, rho: float) -> tuple[list[LayerParams], float]:
    """Exact gradients of the SNN loss w.r.t. every GCN parameter and rho."""
    h_out = tape.outputs[-1]
    if h_out.shape[0] != tape.op.num_nodes:
        raise ShapeError("tape does not match its graph operator")
    _, dh, d_rho = snn_loss_and_grad(h_out, batch, rho)
    return backward_gcn(tape, dh), d_rho


# -- Adam ----------------------------------------------------------------------

@dataclass
class TrainState:
    params: list[LayerParams]
    rho: float
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    step: int = 0
    best_val: float = math.inf
    best_epoch: int = -1
    epochs_since_improvement: int = 0
    history: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if not self.m:
            shapes = [a.shape for a in self.flat()] + [()]
            self.m = [np.zeros(s) for s in shapes]
            self.v = [np.zeros(s) for s in shapes]

    def flat(self) -> list[np.ndarray]:
        return [a for layer in self.params for a in layer.arrays]


def _flat_grads(grads: list[LayerParams]) -> list[np.ndarray]:
    return [a for layer in grads for a in layer.arrays]


def adam_step(state: TrainState, grads: list[LayerParams], d_rho: float, config: TrainConfig) -> TrainState:
    """In-place Adam update of all parameters and rho; rho is clamped to its floor."""
    flat_g = _flat_grads(grads) + [np.asarray(d_rho, dtype=np.float64)]
    targets = state.flat()
    if len(flat_g) != len(targets) + 1:
        raise ShapeError("gradient list does not match parameters")
    for idx, g in enumerate(flat_g):
        if not np.all(np.isfinite(g)):
            bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
            name = "rho" if idx == len(targets) else f"parameter array {idx}"
            raise FloatingPointError(f"non-finite gradient in {name} ({bad} entries), step {state.step}")
    state.step += 1
    b1, b2, lr, eps = config.beta1, config.beta2, config.learning_rate, config.eps
    c1, c2 = 1.0 - b1 ** state.step, 1.0 - b2 ** state.step
    for idx, g in enumerate(flat_g):
        state.m[idx] = b1 * state.m[idx] + (1.0 - b1) * g
        state.v[idx] = b2 * state.v[idx] + (1.0 - b2) * g * g
        update = lr * (state.m[idx] / c1) / (np.sqrt(state.v[idx] / c2) + eps)
        if idx < len(targets):
            targets[idx] -= update
        else:
            state.rho = max(float(state.rho - update), RHO_FLOOR)
    return state


# -- training loop ---------------------------------------------------------------

@dataclass
class TrainResult:
    params: list[LayerParams]          # from the best-validation epoch
    rho: float
    embeddings: np.ndarray             # final-layer embeddings under ``params``
    history: list[dict]
    best_epoch: int
    last_params: list[LayerParams]
    last_rho: float

    @property
    def stopped_early(self) -> bool:
        return bool(self.history) and self.history[-1].get("stopped", False)


GradHook = Callable[[list[LayerParams], float], tuple[list[LayerParams], float]]


def make_batch(g: KnowledgeGraph, gold: GoldClustering, nodes, min_cluster_size: int) -> SnnBatch:
    sizes = gold.sizes
    keep = sorted(n for n in nodes if sizes[gold.labels[n]] >= min_cluster_size)
    return SnnBatch([g.node_id(n) for n in keep], [gold.labels[n] for n in keep])


def _copy_params(params):
    return [p.copy() for p in params]


def train(g: KnowledgeGraph, gold: GoldClustering, fold: FoldSplit,
          gcn_config: GcnConfig = GcnConfig(), train_config: TrainConfig = TrainConfig(),
          grad_hook: GradHook | None = None, op: GraphOperator | None = None) -> TrainResult:
    """Full-batch training; returns the parameters with the lowest validation loss.

    Each epoch: loss and gradient on the train nodes, one Adam step, then the
    validation loss under the updated parameters. ``grad_hook`` may rewrite
    gradients before the step (used to freeze training in tests).
    """
    op = op or GraphOperator.from_graph(g, gcn_config.normalization)
    cfg = train_config
    train_batch = make_batch(g, gold, fold.train, cfg.min_train_cluster_size)
    val_batch = make_batch(g, gold, fold.val, cfg.min_train_cluster_size)
    if len(train_batch) == 0 or len(val_batch) == 0:
        raise ConfigurationError(
            f"fold {fold.fold_index}: {len(train_batch)} train / {len(val_batch)} validation nodes "
            f"in gold clusters of size >= {cfg.min_train_cluster_size}")
    train_batch.check()
    val_batch.check()

    params = init_params(gcn_config, op, cfg.seed)
    state = TrainState(params, 1.0 / cfg.initial_temperature)
    best_params, best_rho = _copy_params(params), state.rho

    outputs, tape = forward_with_tape(op, state.params, gcn_config)
    for epoch in range(cfg.max_epochs):
        rho_before = state.rho
        train_loss, dh, d_rho = snn_loss_and_grad(outputs[-1], train_batch, rho_before)
        grads = backward_gcn(tape, dh)
        if grad_hook is not None:
            grads, d_rho = grad_hook(grads, d_rho)
        adam_step(state, grads, d_rho, cfg)
        outputs, tape = forward_with_tape(op, state.params, gcn_config)
        val_loss = snn_loss(outputs[-1], val_batch, state.rho)
        record = {"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss,
                  "temperature": 1.0 / state.rho}
        state.history.append(record)
        if val_loss < state.best_val - cfg.min_delta:
            state.best_val, state.best_epoch = val_loss, epoch
            state.epochs_since_improvement = 0
            best_params, best_rho = _copy_params(state.params), state.rho
        else:
            state.epochs_since_improvement += 1
            if state.epochs_since_improvement >= cfg.patience:
                record["stopped"] = True
                log.info("early stop at epoch %d (best %d, val %.5f)", epoch, state.best_epoch,
                         state.best_val)
                break

    embeddings = forward(op, best_params, gcn_config)[-1]
    return TrainResult(best_params, best_rho, embeddings, state.history, state.best_epoch,
                       state.params, state.rho)


def write_history_csv(path, history: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,train_loss,val_loss,T\n")
        for rec in history:
            fh.write(f"{rec['epoch']},{rec['train_loss']!r},{rec['val_loss']!r},{rec['temperature']!r}\n")
