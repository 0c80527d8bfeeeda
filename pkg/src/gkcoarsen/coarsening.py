"""Reduction-matrix coarsening: build A' = P^T A P and X' = C^-1 P^T X, lift back.

A partition is stored as a node -> cluster assignment vector; the binary
reduction matrix P (N x K) is never formed densely.  Every product with P is a
gather (``P @ Z``) or a scatter-add (``P^T @ Z``).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .graph import Graph, normalize_adjacency
from .linalg import DTYPE, ContractError, as_sparse, spmm


@dataclass(frozen=True, eq=False)
class Partition:
    """Assignment of ``n`` nodes to ``k`` nonempty clusters."""

    assignment: np.ndarray
    k: int

    def __post_init__(self):
        a = np.ascontiguousarray(self.assignment, dtype=np.int64)
        if a.ndim != 1:
            raise ContractError("assignment must be a vector")
        if self.k < 1:
            raise ContractError(f"cluster count must be >= 1, got {self.k}")
        if a.size and (a.min() < 0 or a.max() >= self.k):
            raise ContractError(f"assignment values must lie in 0..{self.k - 1}")
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)
        sizes = np.bincount(a, minlength=self.k)
        if np.any(sizes == 0):
            raise ContractError(f"empty clusters: {np.flatnonzero(sizes == 0).tolist()}")
        sizes.setflags(write=False)
        object.__setattr__(self, "sizes", sizes)

    @classmethod
    def identity(cls, n: int) -> "Partition":
        return cls(np.arange(n), n)

    @property
    def n(self) -> int:
        return self.assignment.shape[0]

    @cached_property
    def indicator(self) -> sp.csr_matrix:
        """The reduction matrix P as an N x K sparse 0/1 matrix."""
        return sp.csr_matrix(
            (np.ones(self.n, dtype=DTYPE), (np.arange(self.n), self.assignment)),
            shape=(self.n, self.k),
        )

    @cached_property
    def indicator_t(self) -> sp.csr_matrix:
        return self.indicator.T.tocsr()

    def __eq__(self, other):
        return (
            isinstance(other, Partition)
            and self.k == other.k
            and np.array_equal(self.assignment, other.assignment)
        )

    def __hash__(self):
        return hash((self.k, self.assignment.tobytes()))


@dataclass(frozen=True, eq=False)
class CoarsenedGraph:
    adjacency: sp.csr_matrix
    features: np.ndarray
    partition: Partition

    @property
    def source_n(self) -> int:
        return self.partition.n

    @property
    def k(self) -> int:
        return self.partition.k


def _check_rows(m, p: Partition, what: str):
    if m.shape[0] != p.n:
        raise ContractError(f"{what} has {m.shape[0]} rows, partition covers {p.n} nodes")


def coarsen_adjacency(a, p: Partition) -> sp.csr_matrix:
    """``P^T A P``: sum edge weights between every pair of clusters.

    Intra-cluster edges end up on the diagonal as supernode self-loop weight.
    """
    a = sp.coo_matrix(a)
    if a.shape != (p.n, p.n):
        raise ContractError(f"adjacency {a.shape} does not match partition of {p.n} nodes")
    rows = p.assignment[a.row]
    cols = p.assignment[a.col]
    return as_sparse(sp.coo_matrix((a.data.astype(DTYPE), (rows, cols)), shape=(p.k, p.k)))


def cluster_sums(x: np.ndarray, p: Partition) -> np.ndarray:
    """``P^T X``."""
    _check_rows(x, p, "matrix")
    return spmm(p.indicator_t, np.asarray(x, dtype=DTYPE))


def coarsen_features(x: np.ndarray, p: Partition) -> np.ndarray:
    """``C^-1 P^T X``: per-cluster mean of the rows of ``x``."""
    return cluster_sums(x, p) / p.sizes[:, None]


def lift(z_coarse: np.ndarray, p: Partition) -> np.ndarray:
    """``P Z'``: copy each supernode row to every member node."""
    if z_coarse.shape[0] != p.k:
        raise ContractError(f"coarse matrix has {z_coarse.shape[0]} rows, partition has {p.k} clusters")
    return z_coarse[p.assignment]


def coarsen_graph(g: Graph, p: Partition) -> CoarsenedGraph:
    if g.n_nodes != p.n:
        raise ContractError(f"graph has {g.n_nodes} nodes, partition covers {p.n}")
    return CoarsenedGraph(coarsen_adjacency(g.adjacency, p), coarsen_features(g.features, p), p)


def lower_level_objective(z: np.ndarray, p: Partition) -> float:
    """``||(P C^-1 P^T - I) Z||_F^2``, the within-cluster sum of squares of ``z``."""
    z = np.asarray(z, dtype=DTYPE)
    resid = z - lift(coarsen_features(z, p), p)
    return float(np.sum(resid * resid))


def convmatch_cost(g: Graph, p: Partition, theta: float = 1.0) -> float:
    """Entrywise l1 distance between supernode and node first-order filtered signals.

    Diagnostic only: ``theta * || P A~' X' - A~ X ||_{1,1}`` where ``A~'`` is the
    symmetric normalization of ``P^T (A + I) P``.
    """
    if theta <= 0:
        raise ContractError(f"theta must be positive, got {theta}")
    if g.n_nodes != p.n:
        raise ContractError(f"graph has {g.n_nodes} nodes, partition covers {p.n}")
    fine = spmm(normalize_adjacency(g.adjacency), g.features)
    a_loop = g.adjacency + sp.identity(g.n_nodes, dtype=DTYPE, format="csr")
    a_coarse = coarsen_adjacency(a_loop, p)
    deg = np.asarray(a_coarse.sum(axis=1)).ravel()
    scale = sp.diags(1.0 / np.sqrt(deg))
    a_coarse_norm = as_sparse(scale @ a_coarse @ scale)
    coarse = lift(spmm(a_coarse_norm, coarsen_features(g.features, p)), p)
    return float(np.sum(np.abs(theta * (coarse - fine))))
