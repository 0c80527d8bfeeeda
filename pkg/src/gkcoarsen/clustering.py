"""K-means over node embeddings.

``kmeans_fit`` runs several seeded k-means++ initializations followed by Lloyd
iterations and keeps the best; ``kmeans_warm_start`` runs a single Lloyd pass
seeded from a previous partition.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coarsening import Partition
from .linalg import DTYPE, ContractError


@dataclass(frozen=True)
class KMeansConfig:
    k: int
    n_restarts: int = 10
    max_iters: int = 100
    tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ContractError(f"k must be >= 1, got {self.k}")
        if self.n_restarts < 1 or self.max_iters < 1:
            raise ContractError("n_restarts and max_iters must be >= 1")
        if self.tol < 0:
            raise ContractError(f"tol must be >= 0, got {self.tol}")


@dataclass(frozen=True, eq=False)
class KMeansResult:
    partition: Partition
    centroids: np.ndarray
    wcss: float
    iters_run: int
    # WCSS after the initial assignment and after every accepted Lloyd step
    history: list[float] = field(default_factory=list)


def _centroids(z: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    sums = np.zeros((k, z.shape[1]), dtype=DTYPE)
    np.add.at(sums, labels, z)
    counts = np.bincount(labels, minlength=k).astype(DTYPE)
    counts[counts == 0] = 1.0
    return sums / counts[:, None]


def kmeans_wcss(z: np.ndarray, labels: np.ndarray, k: int | None = None) -> float:
    """Sum of squared distances from each row of ``z`` to its cluster centroid."""
    labels = np.asarray(labels, dtype=np.int64)
    k = int(labels.max()) + 1 if k is None else k
    resid = z - _centroids(z, labels, k)[labels]
    return float(np.sum(resid * resid))


def _sq_dist_to(z: np.ndarray, point: np.ndarray) -> np.ndarray:
    diff = z - point
    return np.einsum("ij,ij->i", diff, diff)


def _assign(z: np.ndarray, c: np.ndarray) -> np.ndarray:
    # |z|^2 is constant per row, so it is left out of the argmin
    scores = z @ (-2.0 * c).T
    scores += np.sum(c * c, axis=1)[None, :]
    # argmin returns the first minimum: ties go to the lowest cluster index
    labels = np.argmin(scores, axis=1)
    return _repair_empty(z, c, labels)


def _repair_empty(z: np.ndarray, c: np.ndarray, labels: np.ndarray) -> np.ndarray:
    k = c.shape[0]
    sizes = np.bincount(labels, minlength=k)
    empty = np.flatnonzero(sizes == 0)
    if empty.size == 0:
        return labels
    labels = labels.copy()
    resid = z - c[labels]
    own = np.sum(resid * resid, axis=1)
    for j in empty:
        movable = sizes[labels] > 1
        cand = np.where(movable, own, -np.inf)
        i = int(np.argmax(cand))
        sizes[labels[i]] -= 1
        labels[i] = j
        sizes[j] = 1
        own[i] = -np.inf
    return labels


def _kmeans_pp(z: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = z.shape[0]
    chosen = [int(rng.integers(n))]
    closest = _sq_dist_to(z, z[chosen[0]])
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            # inverse-CDF draw proportional to squared distance
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        else:
            idx = int(rng.integers(n))
        chosen.append(idx)
        np.minimum(closest, _sq_dist_to(z, z[idx]), out=closest)
    return z[chosen].copy()


def _lloyd(z: np.ndarray, labels: np.ndarray, k: int, cfg: KMeansConfig):
    wcss = kmeans_wcss(z, labels, k)
    history = [wcss]
    iters = 0
    for _ in range(cfg.max_iters):
        iters += 1
        new_labels = _assign(z, _centroids(z, labels, k))
        new_wcss = kmeans_wcss(z, new_labels, k)
        if new_wcss > wcss:
            # float noise in the expanded distance; keep the better assignment
            break
        converged = np.array_equal(new_labels, labels) or (wcss - new_wcss) <= cfg.tol * wcss
        labels, wcss = new_labels, new_wcss
        history.append(wcss)
        if converged:
            break
    return labels, wcss, iters, history


def _result(z, labels, k, wcss, iters, history) -> KMeansResult:
    return KMeansResult(Partition(labels, k), _centroids(z, labels, k), wcss, iters, history)


def _check(z: np.ndarray, k: int) -> np.ndarray:
    z = np.ascontiguousarray(z, dtype=DTYPE)
    if z.ndim != 2:
        raise ContractError(f"embeddings must be 2-d, got shape {z.shape}")
    if z.shape[0] < k:
        raise ContractError(f"cannot form {k} clusters from {z.shape[0]} points")
    return z


def kmeans_fit(z: np.ndarray, cfg: KMeansConfig) -> KMeansResult:
    z = _check(z, cfg.k)
    n, k = z.shape[0], cfg.k
    if k == n:
        labels = np.arange(n)
        return _result(z, labels, k, 0.0, 0, [0.0])
    best = None
    for child in np.random.SeedSequence(cfg.seed).spawn(cfg.n_restarts):
        rng = np.random.default_rng(child)
        labels = _assign(z, _kmeans_pp(z, k, rng))
        run = _lloyd(z, labels, k, cfg)
        if best is None or run[1] < best[1]:
            best = run
    return _result(z, best[0], k, *best[1:])


def kmeans_warm_start(z: np.ndarray, prev: Partition, cfg: KMeansConfig) -> KMeansResult:
    """One Lloyd run whose centroids start at the cluster means of ``z`` under ``prev``."""
    z = _check(z, prev.k)
    if prev.n != z.shape[0]:
        raise ContractError(f"previous partition covers {prev.n} nodes, embeddings have {z.shape[0]}")
    if prev.k != cfg.k:
        raise ContractError(f"previous partition has {prev.k} clusters, config asks for {cfg.k}")
    if prev.k == prev.n:
        return _result(z, np.arange(prev.n), prev.k, 0.0, 0, [0.0])
    labels, wcss, iters, history = _lloyd(z, np.asarray(prev.assignment), prev.k, cfg)
    return _result(z, labels, prev.k, wcss, iters, history)
