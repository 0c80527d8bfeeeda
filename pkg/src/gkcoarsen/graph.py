"""Graph container, adjacency normalization, homophily and synthetic SBM graphs."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .linalg import ContractError, DTYPE, as_sparse, is_symmetric


class UndefinedValueError(ContractError):
    """Raised when a quantity has no defined value for the given input."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected attributed graph with a node-level train/val/test split.

    ``adjacency`` is symmetric and carries no self loops; ``labels`` holds
    integer classes ``0..n_classes-1``.
    """

    adjacency: sp.csr_matrix
    features: np.ndarray
    labels: np.ndarray
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray
    name: str = "graph"
    n_classes: int = field(default=-1)

    def __post_init__(self):
        a = as_sparse(self.adjacency)
        x = np.ascontiguousarray(self.features, dtype=DTYPE)
        y = np.asarray(self.labels, dtype=np.int64)
        n = a.shape[0]
        if a.shape != (n, n):
            raise ContractError(f"adjacency must be square, got {a.shape}")
        if x.ndim != 2 or x.shape[0] != n:
            raise ContractError(f"features must have {n} rows, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ContractError("features contain non-finite values")
        if y.shape != (n,):
            raise ContractError(f"labels must have length {n}, got {y.shape}")
        if not is_symmetric(a):
            raise ContractError("adjacency must be symmetric")
        masks = [np.asarray(m, dtype=bool) for m in (self.train_mask, self.val_mask, self.test_mask)]
        for m in masks:
            if m.shape != (n,):
                raise ContractError(f"masks must have length {n}")
        if np.any(masks[0] & masks[1]) or np.any(masks[0] & masks[2]) or np.any(masks[1] & masks[2]):
            raise ContractError("train/val/test masks overlap")
        n_classes = self.n_classes if self.n_classes > 0 else (int(y.max()) + 1 if n else 0)
        if n and (y.min() < 0 or y.max() >= n_classes):
            raise ContractError(f"labels outside 0..{n_classes - 1}")
        object.__setattr__(self, "adjacency", a)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "train_mask", masks[0])
        object.__setattr__(self, "val_mask", masks[1])
        object.__setattr__(self, "test_mask", masks[2])
        object.__setattr__(self, "n_classes", n_classes)

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_edges(self) -> int:
        return int(sp.triu(self.adjacency, k=1).nnz)

    def with_masks(self, train, val, test) -> "Graph":
        return replace(self, train_mask=train, val_mask=val, test_mask=test)


def symmetrize(a) -> sp.csr_matrix:
    """Symmetrize by taking the max of both directions and drop self loops."""
    a = as_sparse(a)
    a = a.maximum(a.T).tolil()
    a.setdiag(0)
    return as_sparse(a)


def normalize_adjacency(a) -> sp.csr_matrix:
    """Return ``D^{-1/2} (A + I) D^{-1/2}`` with ``D = diag((A + I) 1)``.

    Existing diagonal weight (e.g. intra-supernode edges of a coarsened graph)
    is kept; the identity is added on top of it.
    """
    a = as_sparse(a)
    if a.shape[0] != a.shape[1]:
        raise ContractError(f"adjacency must be square, got {a.shape}")
    if a.nnz and a.data.min() < 0:
        raise ContractError("adjacency has negative weights")
    a_hat = a + sp.identity(a.shape[0], dtype=DTYPE, format="csr")
    deg = np.asarray(a_hat.sum(axis=1)).ravel()
    d = 1.0 / np.sqrt(deg)
    scale = sp.diags(d)
    return as_sparse(scale @ a_hat @ scale)


def edge_homophily(g: Graph) -> float:
    """Fraction of undirected edges whose endpoints share a label."""
    upper = sp.triu(g.adjacency, k=1).tocoo()
    if upper.nnz == 0:
        raise UndefinedValueError("edge homophily is undefined for an edgeless graph")
    same = g.labels[upper.row] == g.labels[upper.col]
    return float(np.count_nonzero(same)) / upper.nnz


def random_masks(
    labels: np.ndarray,
    fractions: tuple[float, float, float],
    seed: int,
    per_class_balanced: bool = False,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw disjoint train/val/test masks.

    Sizes are ``floor(f * N)`` for each fraction.  With ``per_class_balanced``
    the train set takes ``train_size // n_classes`` nodes of every class.
    """
    labels = np.asarray(labels)
    n = labels.shape[0]
    if any(f < 0 for f in fractions) or not any(f > 0 for f in fractions) or sum(fractions) > 1 + 1e-12:
        raise ContractError(f"invalid split fractions {fractions}")
    rng = np.random.default_rng(seed)
    sizes = [int(np.floor(f * n + 1e-9)) for f in fractions]
    masks = [np.zeros(n, dtype=bool) for _ in range(3)]
    if per_class_balanced:
        classes = np.unique(labels)
        per_class = sizes[0] // len(classes)
        train_idx = []
        for c in classes:
            members = np.flatnonzero(labels == c)
            if members.size < per_class:
                raise ContractError(f"class {c} has {members.size} nodes, need {per_class} for training")
            train_idx.append(rng.permutation(members)[:per_class])
        train_idx = np.sort(np.concatenate(train_idx)) if train_idx else np.array([], dtype=np.int64)
        masks[0][train_idx] = True
        rest = rng.permutation(np.flatnonzero(~masks[0]))
        masks[1][rest[: sizes[1]]] = True
        masks[2][rest[sizes[1] : sizes[1] + sizes[2]]] = True
    else:
        order = rng.permutation(n)
        start = 0
        for m, size in zip(masks, sizes):
            m[order[start : start + size]] = True
            start += size
    return masks[0], masks[1], masks[2]


def generate_sbm(
    n: int,
    classes: int,
    p_in: float,
    p_out: float,
    feature_dim: int,
    feature_noise: float,
    seed: int,
    fractions: tuple[float, float, float] = (0.6, 0.2, 0.2),
    name: str = "sbm",
) -> Graph:
    """Sample a stochastic block model with Gaussian class-conditional features.

    Node ``i`` belongs to class ``i % classes`` (balanced blocks).  Each
    unordered pair is joined with probability ``p_in`` inside a class and
    ``p_out`` across classes.  Features are the one-hot class direction (cycled
    when ``feature_dim < classes``) plus ``feature_noise`` times standard
    normal noise.
    """
    if not (0.0 <= p_in <= 1.0 and 0.0 <= p_out <= 1.0):
        raise ContractError(f"probabilities must lie in [0, 1], got p_in={p_in}, p_out={p_out}")
    if classes < 1 or n < classes:
        raise ContractError(f"need n >= classes >= 1, got n={n}, classes={classes}")
    if feature_dim < 1 or feature_noise < 0:
        raise ContractError("feature_dim must be >= 1 and feature_noise >= 0")
    rng = np.random.default_rng(seed)
    labels = np.arange(n, dtype=np.int64) % classes

    rows, cols = [], []
    chunk = max(1, 2_000_000 // max(n, 1))
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        u = rng.random((stop - start, n))
        prob = np.where(labels[start:stop, None] == labels[None, :], p_in, p_out)
        hit = u < prob
        # keep strictly-upper pairs only
        hit &= np.arange(n)[None, :] > np.arange(start, stop)[:, None]
        r, c = np.nonzero(hit)
        rows.append(r + start)
        cols.append(c)
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    upper = sp.coo_matrix((np.ones(r.size, dtype=DTYPE), (r, c)), shape=(n, n))
    adjacency = as_sparse(upper + upper.T)

    means = np.zeros((classes, feature_dim), dtype=DTYPE)
    means[np.arange(classes), np.arange(classes) % feature_dim] = 1.0
    features = means[labels] + feature_noise * rng.standard_normal((n, feature_dim))
    train, val, test = random_masks(labels, fractions, seed=int(rng.integers(2**31)))
    return Graph(adjacency, features, labels, train, val, test, name=name, n_classes=classes)
