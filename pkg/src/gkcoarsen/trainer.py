"""Joint GNN training and graph coarsening by alternating K-means and gradient steps.

``train_gk`` alternates gradient updates of the GNN on the coarsened graph
(loss on lifted supernode predictions) with K-means re-clustering of the
full-graph node embeddings.  Re-clustering is triggered when the embeddings
drift by more than ``delta`` (relative Frobenius change) or after ``period``
gradient steps.  ``train_full`` is the uncoarsened reference and
``train_baseline_static`` coarsens once before training.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .clustering import KMeansConfig, kmeans_fit, kmeans_warm_start
from .coarsening import CoarsenedGraph, Partition, coarsen_graph, lift
from .gnn import GnnModel, embeddings, forward, init_model, loss_and_grad
from .graph import Graph, normalize_adjacency
from .linalg import ContractError, as_sparse, frobenius_norm

log = logging.getLogger(__name__)

OPTIMIZERS = ("adam", "sgd")
STRATEGIES = ("random", "feature_kmeans")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    arch: str = "gcn"
    hidden: int = 64
    n_layers: int = 2
    n_hops: int = 2
    lr: float = 0.01
    optimizer: str = "adam"
    weight_decay: float = 5e-4
    # cluster count: either k directly or ratio r with K = round(r N)
    k: int | None = None
    ratio: float | None = None
    delta: float = 0.1
    period: float = 50
    max_epochs: int = 300
    seed: int = 0
    eval_every: int = 1
    patience: int | None = None
    n_restarts: int = 10
    kmeans_max_iters: int = 100
    kmeans_tol: float = 1e-6
    # "normalized": D^-1/2 (A+I) D^-1/2 ; "raw": A itself (FBGCN fidelity runs)
    propagation: str = "normalized"
    # which representation is clustered: "logits" or "hidden"
    cluster_on: str = "logits"
    # which Z the drift test reads: lifted coarse output, or a fresh full forward
    drift_source: str = "lifted"

    def __post_init__(self):
        if not self.lr > 0:
            raise ContractError(f"step size must be positive, got {self.lr}")
        if not self.delta > 0:
            raise ContractError(f"drift threshold must be positive, got {self.delta}")
        if not self.period >= 1:
            raise ContractError(f"recoarsening period must be >= 1, got {self.period}")
        if self.ratio is not None and not 0 < self.ratio <= 1:
            raise ContractError(f"coarsening ratio must lie in (0, 1], got {self.ratio}")
        if self.k is not None and self.k < 1:
            raise ContractError(f"cluster count must be >= 1, got {self.k}")
        if self.optimizer not in OPTIMIZERS:
            raise ContractError(f"optimizer must be one of {OPTIMIZERS}")
        if self.propagation not in ("normalized", "raw"):
            raise ContractError(f"unknown propagation {self.propagation!r}")
        if self.cluster_on not in ("logits", "hidden"):
            raise ContractError(f"unknown cluster_on {self.cluster_on!r}")
        if self.drift_source not in ("lifted", "full"):
            raise ContractError(f"unknown drift_source {self.drift_source!r}")
        if self.max_epochs < 1 or self.eval_every < 1:
            raise ContractError("max_epochs and eval_every must be >= 1")

    def resolve_k(self, n: int) -> int:
        if self.k is not None:
            k = self.k
        elif self.ratio is not None:
            k = max(1, int(round(self.ratio * n)))
        else:
            raise ContractError("either k or ratio must be set")
        if k > n:
            raise ContractError(f"cannot coarsen {n} nodes into {k} clusters")
        return k


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    train_acc: float
    val_acc: float
    test_acc: float
    drift: float
    recoarsened: bool
    seconds: float


@dataclass
class TrainState:
    model: GnnModel
    partition: Partition | None
    coarse: CoarsenedGraph | None
    z_last: np.ndarray | None
    t: int
    epoch: int
    history: list[EpochRecord] = field(default_factory=list)


@dataclass
class TrainReport:
    method: str
    model: GnnModel
    best_model: GnnModel
    partition: Partition | None
    best_epoch: int
    best_val_acc: float
    test_acc: float
    wall_seconds: float
    n_coarsenings: int
    history: list[EpochRecord]
    step_seconds: list[float]
    cluster_seconds: float

    @property
    def n_recoarsenings(self) -> int:
        """Coarsening events after the initial one."""
        return max(0, self.n_coarsenings - 1)

    @property
    def losses(self) -> list[float]:
        return [r.loss for r in self.history]


class SGD:
    def __init__(self, lr: float, weight_decay: float = 0.0):
        self.lr = lr
        self.weight_decay = weight_decay

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        for p, g in zip(params, grads):
            if self.weight_decay:
                g = g + self.weight_decay * p
            p -= self.lr * g


class Adam:
    def __init__(self, lr: float, weight_decay: float = 0.0, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m: list[np.ndarray] | None = None
        self.v: list[np.ndarray] | None = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if self.weight_decay:
                g = g + self.weight_decay * p
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(cfg: TrainConfig):
    if cfg.optimizer == "adam":
        return Adam(cfg.lr, cfg.weight_decay)
    return SGD(cfg.lr, cfg.weight_decay)


def propagation_operator(a: sp.csr_matrix, kind: str = "normalized") -> sp.csr_matrix:
    return normalize_adjacency(a) if kind == "normalized" else as_sparse(a)


def accuracy(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return float("nan")
    return float(np.mean(np.argmax(logits[idx], axis=1) == labels[idx]))


def evaluate(model: GnnModel, g: Graph, s_full: sp.csr_matrix | None = None) -> dict[str, float]:
    """Accuracy of the full-graph model on the three masks."""
    if s_full is None:
        s_full = normalize_adjacency(g.adjacency)
    logits = forward(model, g.features, s_full)
    return {
        "train_acc": accuracy(logits, g.labels, g.train_mask),
        "val_acc": accuracy(logits, g.labels, g.val_mask),
        "test_acc": accuracy(logits, g.labels, g.test_mask),
    }


def drift_ratio(z: np.ndarray, z_last: np.ndarray) -> float:
    """``||Z - Z_last||_F / ||Z_last||_F`` (inf when Z_last is zero and Z is not)."""
    num = frobenius_norm(z - z_last)
    den = frobenius_norm(z_last)
    if den == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return num / den


def _check_graph(g: Graph):
    if not g.train_mask.any():
        raise ContractError("training mask is empty")


def _kmeans_cfg(cfg: TrainConfig, k: int) -> KMeansConfig:
    return KMeansConfig(k, cfg.n_restarts, cfg.kmeans_max_iters, cfg.kmeans_tol, cfg.seed)


class _Loop:
    """Shared bookkeeping: evaluation, model selection, timing, early stopping."""

    def __init__(self, g: Graph, cfg: TrainConfig, s_full, model: GnnModel):
        self.g, self.cfg, self.s_full = g, cfg, s_full
        self.history: list[EpochRecord] = []
        self.step_seconds: list[float] = []
        self.cluster_seconds = 0.0
        self.train_seconds = 0.0
        self.best = (-1.0, 0, float("nan"), model.copy())
        self.last_eval: dict[str, float] = {"train_acc": math.nan, "val_acc": math.nan, "test_acc": math.nan}
        self.since_best = 0

    def record(self, model, epoch, loss, drift, recoarsened) -> bool:
        """Store one epoch; return True when early stopping fires."""
        if not math.isfinite(loss):
            raise TrainingError(f"non-finite training loss {loss} at epoch {epoch}")
        if epoch % self.cfg.eval_every == 0 or epoch == self.cfg.max_epochs:
            self.last_eval = evaluate(model, self.g, self.s_full)
            val = self.last_eval["val_acc"]
            if not math.isnan(val) and val > self.best[0]:
                self.best = (val, epoch, self.last_eval["test_acc"], model.copy())
                self.since_best = 0
            else:
                self.since_best += 1
        self.history.append(
            EpochRecord(epoch, loss, drift=drift, recoarsened=recoarsened, seconds=self.train_seconds, **self.last_eval)
        )
        return self.cfg.patience is not None and self.since_best >= self.cfg.patience

    def report(self, method, model, partition, n_coarsenings) -> TrainReport:
        best_val, best_epoch, best_test, best_model = self.best
        if best_val < 0:
            # no validation nodes: fall back to the final model
            best_model, best_epoch = model.copy(), self.history[-1].epoch
            best_val, best_test = math.nan, self.history[-1].test_acc
        return TrainReport(
            method=method,
            model=model,
            best_model=best_model,
            partition=partition,
            best_epoch=best_epoch,
            best_val_acc=best_val,
            test_acc=best_test,
            wall_seconds=self.train_seconds,
            n_coarsenings=n_coarsenings,
            history=self.history,
            step_seconds=self.step_seconds,
            cluster_seconds=self.cluster_seconds,
        )


def _init(g: Graph, cfg: TrainConfig, model: GnnModel | None) -> GnnModel:
    if model is not None:
        if model.dims[0] != g.n_features or model.dims[-1] != g.n_classes:
            raise ContractError("initial model does not match graph features/classes")
        return model.copy()
    return init_model(cfg.arch, g.n_features, g.n_classes, cfg.hidden, cfg.n_layers, cfg.n_hops, cfg.seed)


def train_full(
    g: Graph,
    cfg: TrainConfig,
    model: GnnModel | None = None,
    callback: Callable[[TrainState], None] | None = None,
) -> TrainReport:
    """Plain full-graph training, the ``r = 1`` reference."""
    _check_graph(g)
    t0 = time.perf_counter()
    s_full = propagation_operator(g.adjacency, cfg.propagation)
    model = _init(g, cfg, model)
    opt = make_optimizer(cfg)
    loop = _Loop(g, cfg, s_full, model)
    loop.train_seconds = time.perf_counter() - t0
    state = TrainState(model, None, None, None, 1, 0, loop.history)
    for epoch in range(1, cfg.max_epochs + 1):
        tick = time.perf_counter()
        loss, tape = loss_and_grad(model, g.features, s_full, g.labels, g.train_mask)
        opt.step(model.parameters(), [w for grp in tape.grads for w in grp])
        elapsed = time.perf_counter() - tick
        loop.step_seconds.append(elapsed)
        loop.train_seconds += elapsed
        stop = loop.record(model, epoch, loss, math.nan, False)
        state.epoch = epoch
        if callback:
            callback(state)
        if stop:
            break
    return loop.report("full", model, None, 0)


def _drift_reference(cfg, model, coarse, s_coarse, z_full):
    # The lifted coarse output never equals the full-graph output, so drift of
    # lifted predictions is measured against the lifted output at coarsening time.
    if cfg.drift_source == "full":
        return z_full
    return lift(forward(model, coarse.features, s_coarse), coarse.partition)


def _train_coarsened(
    g: Graph,
    cfg: TrainConfig,
    method: str,
    model: GnnModel | None,
    initial_partition: Callable[[GnnModel, sp.csr_matrix], Partition],
    adaptive: bool,
    callback: Callable[[TrainState], None] | None,
) -> TrainReport:
    _check_graph(g)
    k = cfg.resolve_k(g.n_nodes)
    km_cfg = _kmeans_cfg(cfg, k)
    t0 = time.perf_counter()
    s_full = propagation_operator(g.adjacency, cfg.propagation)
    model = _init(g, cfg, model)
    opt = make_optimizer(cfg)
    loop = _Loop(g, cfg, s_full, model)

    partition = initial_partition(model, s_full)
    coarse = coarsen_graph(g, partition)
    s_coarse = propagation_operator(coarse.adjacency, cfg.propagation)
    z_last = forward(model, g.features, s_full) if adaptive else None
    z_ref = _drift_reference(cfg, model, coarse, s_coarse, z_last) if adaptive else None
    n_coarsenings = 1
    loop.cluster_seconds = time.perf_counter() - t0
    loop.train_seconds = loop.cluster_seconds
    state = TrainState(model, partition, coarse, z_last, 1, 0, loop.history)

    for epoch in range(1, cfg.max_epochs + 1):
        tick = time.perf_counter()
        loss, tape = loss_and_grad(model, coarse.features, s_coarse, g.labels, g.train_mask, partition)
        opt.step(model.parameters(), [w for grp in tape.grads for w in grp])
        state.t += 1
        drift = math.nan
        if adaptive:
            if cfg.drift_source == "lifted":
                z_now = tape.predictions
            else:
                z_now = forward(model, g.features, s_full)
            drift = drift_ratio(z_now, z_ref)
        step = time.perf_counter() - tick
        loop.step_seconds.append(step)

        recoarsened = False
        if adaptive and (drift > cfg.delta or state.t > cfg.period):
            tick = time.perf_counter()
            state.t = 1
            z = forward(model, g.features, s_full)
            z_cluster = z if cfg.cluster_on == "logits" else embeddings(model, g.features, s_full, "hidden")
            partition = kmeans_warm_start(z_cluster, partition, km_cfg).partition
            coarse = coarsen_graph(g, partition)
            s_coarse = propagation_operator(coarse.adjacency, cfg.propagation)
            z_last = z
            z_ref = _drift_reference(cfg, model, coarse, s_coarse, z_last)
            n_coarsenings += 1
            recoarsened = True
            spent = time.perf_counter() - tick
            loop.cluster_seconds += spent
            step += spent
        loop.train_seconds += step

        stop = loop.record(model, epoch, loss, drift, recoarsened)
        state.partition, state.coarse, state.z_last, state.epoch = partition, coarse, z_last, epoch
        if callback:
            callback(state)
        if stop:
            break
    log.debug("%s finished: %d coarsening events", method, n_coarsenings)
    return loop.report(method, model, partition, n_coarsenings)


def train_gk(
    g: Graph,
    cfg: TrainConfig,
    model: GnnModel | None = None,
    callback: Callable[[TrainState], None] | None = None,
) -> TrainReport:
    """Train while adaptively coarsening the graph by K-means on node embeddings.

    The initial partition comes from a multi-restart K-means fit of the
    initial model's embeddings.  After every gradient step the drift of the
    lifted coarse predictions against the embeddings cached at the last
    coarsening is checked; when it exceeds ``cfg.delta`` or more than
    ``cfg.period`` steps have passed, full-graph embeddings are recomputed and
    re-clustered with a warm-started K-means.  The drift test reuses the
    predictions of the step's own forward pass (taken before the update), so
    the step right after a coarsening always reads zero drift.  ``period = inf`` and
    ``delta = inf`` reduce to a single coarsening before training.
    """
    k = cfg.resolve_k(g.n_nodes)
    km_cfg = _kmeans_cfg(cfg, k)

    def initial(model, s_full):
        z = embeddings(model, g.features, s_full, cfg.cluster_on)
        return kmeans_fit(z, km_cfg).partition

    return _train_coarsened(g, cfg, "gk", model, initial, adaptive=True, callback=callback)


def random_partition(n: int, k: int, seed: int) -> Partition:
    """Balanced random partition: cluster sizes differ by at most one."""
    rng = np.random.default_rng(seed)
    return Partition(rng.permutation(np.arange(n) % k), k)


def train_baseline_static(
    g: Graph,
    cfg: TrainConfig,
    strategy: str,
    model: GnnModel | None = None,
    callback: Callable[[TrainState], None] | None = None,
) -> TrainReport:
    """Coarsen once before training (random or K-means on raw features), never again."""
    if strategy not in STRATEGIES:
        raise ContractError(f"strategy must be one of {STRATEGIES}")
    k = cfg.resolve_k(g.n_nodes)

    def initial(model, s_full):
        if strategy == "random":
            if k == g.n_nodes:
                return Partition.identity(k)
            return random_partition(g.n_nodes, k, cfg.seed)
        return kmeans_fit(g.features, _kmeans_cfg(cfg, k)).partition

    return _train_coarsened(g, cfg, f"static_{strategy}", model, initial, adaptive=False, callback=callback)
