"""GCN and filter-bank GCN with hand-written reverse-mode gradients.

Both architectures are the same layer family

    Z_next = sigma( sum_{r in hops} S^r Z W_r )

with ``hops = (1,)`` for GCN and ``hops = (0, ..., R-1)`` for FBGCN, where
``S`` is the propagation operator handed to :func:`forward` (normally the
normalized adjacency with self loops).  Powers of ``S`` are applied with
Horner's rule, so ``S^r`` is never materialized.

Hidden layers use ReLU, the output layer is linear and produces one logit per
class.  The same weights run on the full graph and on any coarsened graph.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .coarsening import Partition, cluster_sums, lift
from .linalg import DTYPE, ContractError, spmm

ARCHS = ("gcn", "fbgcn")
CHECKPOINT_VERSION = 1


@dataclass
class GnnModel:
    arch: str
    dims: list[int]
    hops: tuple[int, ...]
    # weights[layer][j] multiplies S^hops[j]
    weights: list[list[np.ndarray]]

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ContractError(f"unknown architecture {self.arch!r}")
        if len(self.weights) != len(self.dims) - 1:
            raise ContractError("one weight group per layer is required")
        for layer, group in enumerate(self.weights):
            if len(group) != len(self.hops):
                raise ContractError(f"layer {layer} has {len(group)} hop weights, expected {len(self.hops)}")
            for w in group:
                if w.shape != (self.dims[layer], self.dims[layer + 1]):
                    raise ContractError(
                        f"layer {layer} weight shape {w.shape} != {(self.dims[layer], self.dims[layer + 1])}"
                    )

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> list[np.ndarray]:
        return [w for group in self.weights for w in group]

    def copy(self) -> "GnnModel":
        return GnnModel(self.arch, list(self.dims), self.hops, [[w.copy() for w in g] for g in self.weights])


def init_model(
    arch: str,
    in_dim: int,
    out_dim: int,
    hidden: int = 64,
    n_layers: int = 2,
    n_hops: int = 2,
    seed: int = 0,
) -> GnnModel:
    """Glorot-uniform initialization, seeded."""
    if arch not in ARCHS:
        raise ContractError(f"unknown architecture {arch!r}")
    if n_layers < 1:
        raise ContractError("need at least one layer")
    hops = (1,) if arch == "gcn" else tuple(range(n_hops))
    if not hops:
        raise ContractError("FBGCN needs at least one hop")
    dims = [in_dim] + [hidden] * (n_layers - 1) + [out_dim]
    rng = np.random.default_rng(seed)
    weights = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append([rng.uniform(-bound, bound, size=(fan_in, fan_out)) for _ in hops])
    return GnnModel(arch, dims, hops, weights)


def _propagate(s: sp.csr_matrix, terms: dict[int, np.ndarray]) -> np.ndarray:
    # Horner: sum_r S^r T_r = T_0 + S (T_1 + S (T_2 + ...))
    top = max(terms)
    acc = terms[top]
    for r in range(top - 1, -1, -1):
        acc = spmm(s, acc)
        if r in terms:
            acc = acc + terms[r]
    return acc


def _check_inputs(model: GnnModel, x: np.ndarray, s: sp.csr_matrix):
    if x.ndim != 2 or x.shape[1] != model.dims[0]:
        raise ContractError(f"features shape {x.shape} does not match input dim {model.dims[0]}")
    if s.shape != (x.shape[0], x.shape[0]):
        raise ContractError(f"propagation operator {s.shape} does not match {x.shape[0]} nodes")


def _forward(model: GnnModel, x: np.ndarray, s: sp.csr_matrix):
    _check_inputs(model, x, s)
    inputs, pre = [], []
    h = x
    for layer, group in enumerate(model.weights):
        inputs.append(h)
        z = _propagate(s, {r: h @ w for r, w in zip(model.hops, group)})
        pre.append(z)
        h = np.maximum(z, 0.0) if layer < model.n_layers - 1 else z
    return h, inputs, pre


def forward(model: GnnModel, x: np.ndarray, a_norm: sp.csr_matrix) -> np.ndarray:
    """Output logits ``f(X, A; Theta)`` (one row per node)."""
    return _forward(model, np.asarray(x, dtype=DTYPE), a_norm)[0]


def embeddings(model: GnnModel, x: np.ndarray, a_norm: sp.csr_matrix, layer: str = "logits") -> np.ndarray:
    """Node embeddings used for clustering.

    ``layer="logits"`` (default) returns the model output; ``"hidden"`` returns
    the last hidden representation instead.
    """
    out, inputs, _ = _forward(model, np.asarray(x, dtype=DTYPE), a_norm)
    if layer == "logits":
        return out
    if layer == "hidden":
        return inputs[-1] if model.n_layers > 1 else out
    raise ContractError(f"unknown embedding layer {layer!r}")


@dataclass
class GradientTape:
    """Result of a forward/backward pass.

    ``grads`` mirrors ``model.weights``; ``logits`` is the raw model output on
    the graph that was fed in, ``predictions`` the (possibly lifted) logits the
    loss was evaluated on.
    """

    grads: list[list[np.ndarray]]
    logits: np.ndarray
    predictions: np.ndarray
    inputs: list[np.ndarray] = field(repr=False, default_factory=list)
    pre_activations: list[np.ndarray] = field(repr=False, default_factory=list)


def cross_entropy(logits: np.ndarray, targets: np.ndarray, mask: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy over masked rows and its gradient w.r.t. ``logits``."""
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise ContractError("loss mask selects no nodes")
    sel = logits[idx]
    shifted = sel - sel.max(axis=1, keepdims=True)
    log_norm = np.log(np.sum(np.exp(shifted), axis=1))
    log_p = shifted - log_norm[:, None]
    y = np.asarray(targets)[idx]
    loss = -float(np.mean(log_p[np.arange(idx.size), y]))
    g_sel = np.exp(log_p)
    g_sel[np.arange(idx.size), y] -= 1.0
    grad = np.zeros_like(logits)
    grad[idx] = g_sel / idx.size
    return loss, grad


def _backward(model: GnnModel, s: sp.csr_matrix, inputs, pre, g_out: np.ndarray):
    s_t = s.T.tocsr()
    grads: list[list[np.ndarray]] = [[] for _ in model.weights]
    g = g_out
    for layer in range(model.n_layers - 1, -1, -1):
        if layer < model.n_layers - 1:
            g = g * (pre[layer] > 0)
        h = inputs[layer]
        top = max(model.hops)
        powered = {0: g}
        for r in range(1, top + 1):
            powered[r] = spmm(s_t, powered[r - 1])
        g_in = None
        for r, w in zip(model.hops, model.weights[layer]):
            u = powered[r]
            grads[layer].append(h.T @ u)
            if layer > 0:
                term = u @ w.T
                g_in = term if g_in is None else g_in + term
        g = g_in
    return grads


def loss_and_grad(
    model: GnnModel,
    x: np.ndarray,
    a_norm: sp.csr_matrix,
    targets: np.ndarray,
    mask: np.ndarray,
    lift_partition: Partition | None = None,
) -> tuple[float, GradientTape]:
    """Cross-entropy of the (optionally lifted) logits and its exact gradient.

    With ``lift_partition`` the model runs on the coarsened graph and every
    supernode's logits are broadcast to its member nodes before the loss;
    a supernode therefore receives the summed gradient of its masked members.
    ``targets`` and ``mask`` always index original nodes.
    """
    x = np.asarray(x, dtype=DTYPE)
    logits, inputs, pre = _forward(model, x, a_norm)
    predictions = lift(logits, lift_partition) if lift_partition is not None else logits
    if predictions.shape[0] != np.asarray(mask).shape[0]:
        raise ContractError("mask length does not match the number of predicted nodes")
    loss, g_pred = cross_entropy(predictions, targets, mask)
    g_logits = cluster_sums(g_pred, lift_partition) if lift_partition is not None else g_pred
    grads = _backward(model, a_norm, inputs, pre, g_logits)
    return loss, GradientTape(grads, logits, predictions, inputs, pre)


def save_model(model: GnnModel, path: str | Path) -> None:
    """Write a checkpoint: ``.npz`` with a JSON ``meta`` entry and one array per weight.

    Arrays are stored as raw float64, so a load round-trips bit-exactly.
    """
    meta = {
        "format": "gkcoarsen-checkpoint",
        "version": CHECKPOINT_VERSION,
        "arch": model.arch,
        "dims": model.dims,
        "hops": list(model.hops),
    }
    arrays = {"meta": np.array(json.dumps(meta, sort_keys=True))}
    for layer, group in enumerate(model.weights):
        for j, w in enumerate(group):
            arrays[f"w_{layer}_{j}"] = w
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_model(path: str | Path) -> GnnModel:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format") != "gkcoarsen-checkpoint":
            raise ContractError(f"{path}: not a model checkpoint")
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ContractError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        hops = tuple(meta["hops"])
        weights = [
            [np.array(data[f"w_{layer}_{j}"], dtype=DTYPE) for j in range(len(hops))]
            for layer in range(len(meta["dims"]) - 1)
        ]
    return GnnModel(meta["arch"], list(meta["dims"]), hops, weights)
