"""Dense and sparse kernels shared by the rest of the package.

Dense matrices are float64 ``numpy.ndarray`` objects; sparse matrices are
canonical ``scipy.sparse.csr_matrix`` objects (sorted indices, no duplicate
entries, no stored zeros).  Every kernel checks shapes and raises
:class:`ContractError` on a mismatch.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
import scipy.sparse as sp

DTYPE = np.float64


class ContractError(ValueError):
    """Raised when an operation is called outside its preconditions."""


def as_dense(m) -> np.ndarray:
    out = np.asarray(m, dtype=DTYPE)
    if out.ndim != 2:
        raise ContractError(f"expected a 2-d matrix, got shape {out.shape}")
    return out


def as_sparse(m) -> sp.csr_matrix:
    """Return ``m`` as a canonical float64 CSR matrix.

    Duplicates are summed and explicit zeros dropped so the result satisfies
    the no-duplicate / nonzero-weight invariant.
    """
    out = sp.csr_matrix(m, dtype=DTYPE, copy=True)
    out.sum_duplicates()
    out.eliminate_zeros()
    out.sort_indices()
    if not np.all(np.isfinite(out.data)):
        raise ContractError("sparse matrix has non-finite weights")
    return out


def from_triplets(rows, cols, weights, shape: tuple[int, int]) -> sp.csr_matrix:
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    if rows.size and (rows.min() < 0 or rows.max() >= shape[0] or cols.min() < 0 or cols.max() >= shape[1]):
        raise ContractError(f"triplet index outside {shape}")
    return as_sparse(sp.coo_matrix((np.asarray(weights, dtype=DTYPE), (rows, cols)), shape=shape))


def spmm(a: sp.csr_matrix, b: np.ndarray) -> np.ndarray:
    """Sparse-dense product ``a @ b``.

    scipy's CSR kernel walks rows in index order and accumulates each row
    sequentially, so the result is bit-reproducible for a fixed entry order.
    """
    if a.shape[1] != b.shape[0]:
        raise ContractError(f"spmm: {a.shape} x {b.shape}")
    return np.asarray(a @ b, dtype=DTYPE)


def gemm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[1] != b.shape[0]:
        raise ContractError(f"gemm: {a.shape} x {b.shape}")
    return a @ b


def transpose(m):
    return m.T.tocsr() if sp.issparse(m) else np.ascontiguousarray(m.T)


def row_scale(m, d):
    """Multiply row ``i`` of ``m`` by ``d[i]`` (i.e. ``diag(d) @ m``)."""
    d = np.asarray(d, dtype=DTYPE)
    if d.shape != (m.shape[0],):
        raise ContractError(f"row_scale: {d.shape} scale for {m.shape} matrix")
    if sp.issparse(m):
        return as_sparse(sp.diags(d) @ m)
    return m * d[:, None]


def elementwise(op: Callable[..., np.ndarray], *ms: np.ndarray) -> np.ndarray:
    shapes = {m.shape for m in ms}
    if len(shapes) != 1:
        raise ContractError(f"elementwise: mismatched shapes {sorted(shapes)}")
    return np.asarray(op(*ms), dtype=DTYPE)


def frobenius_norm(m) -> float:
    if sp.issparse(m):
        return float(np.sqrt(np.dot(m.data, m.data)))
    flat = np.ravel(m)
    return float(np.sqrt(np.dot(flat, flat)))


def is_symmetric(a: sp.csr_matrix, tol: float = 0.0) -> bool:
    if a.shape[0] != a.shape[1]:
        return False
    diff = (a - a.T).tocsr()
    return diff.nnz == 0 or float(np.max(np.abs(diff.data))) <= tol
