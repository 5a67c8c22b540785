"""Minimal sparse/dense matrix kernels shared by the rest of the library.

Sparse matrices are scipy CSC arrays and dense matrices are float64 numpy
arrays; the constructors here validate the invariants the pipeline relies on
(no duplicate coordinates, finite values, indices in range). The dense
factorizations go through LAPACK. This module is not a general BLAS: only the
operations the topic pipeline needs are exposed.

All returned objects are treated as immutable; callers must not modify them.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np
import scipy.linalg
import scipy.sparse as sp


class DimensionMismatch(ValueError):
    """Inner dimensions of an operation disagree."""

    def __init__(self, op: str, left: tuple, right: tuple):
        super().__init__(
            f"{op}: inner dimensions disagree, left shape {tuple(left)} vs "
            f"right shape {tuple(right)}"
        )
        self.left_shape = tuple(left)
        self.right_shape = tuple(right)


class NotPositiveDefinite(ValueError):
    """Cholesky hit a non-positive pivot."""

    def __init__(self, pivot: int):
        super().__init__(f"matrix is not positive definite (pivot {pivot})")
        self.pivot = pivot


class NotSymmetric(ValueError):
    pass


def sparse_matrix(
    rows: int, cols: int, entries: Iterable[tuple[int, int, float]]
) -> sp.csc_array:
    """Build a validated CSC matrix from (row, col, value) triples.

    Rejects duplicate coordinates, out-of-range indices and non-finite values.
    """
    if rows < 0 or cols < 0:
        raise ValueError(f"negative shape ({rows}, {cols})")
    triples = list(entries)
    if not triples:
        return sp.csc_array((rows, cols), dtype=np.float64)
    i = np.asarray([t[0] for t in triples], dtype=np.int64)
    j = np.asarray([t[1] for t in triples], dtype=np.int64)
    v = np.asarray([t[2] for t in triples], dtype=np.float64)
    if (i < 0).any() or (i >= rows).any() or (j < 0).any() or (j >= cols).any():
        bad = int(np.flatnonzero((i < 0) | (i >= rows) | (j < 0) | (j >= cols))[0])
        raise ValueError(
            f"entry {bad} at ({int(i[bad])}, {int(j[bad])}) is outside "
            f"shape ({rows}, {cols})"
        )
    if not np.isfinite(v).all():
        raise ValueError("sparse matrix entries must be finite")
    flat = i * cols + j
    if len(np.unique(flat)) != len(flat):
        raise ValueError("duplicate (row, col) coordinates")
    m = sp.csc_array((v, (i, j)), shape=(rows, cols))
    m.sort_indices()
    return m


def as_sparse(m) -> sp.csc_array:
    """Coerce to a validated float64 CSC array."""
    out = sp.csc_array(m, dtype=np.float64)
    if not np.isfinite(out.data).all():
        raise ValueError("sparse matrix entries must be finite")
    out.sort_indices()
    return out


def dense_matrix(values) -> np.ndarray:
    """Coerce to a validated 2-D float64 array (row-major)."""
    a = np.ascontiguousarray(values, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"dense matrix must be 2-D, got ndim={a.ndim}")
    if not np.isfinite(a).all():
        raise ValueError("dense matrix entries must be finite")
    return a


def spmm(a, b) -> np.ndarray:
    """Sparse times (dense or sparse) matrix product, returned dense.

    Exact mathematical product; raises DimensionMismatch when the inner
    dimensions disagree.
    """
    a = as_sparse(a)
    if sp.issparse(b):
        b_shape = b.shape
    else:
        b = dense_matrix(b)
        b_shape = b.shape
    if a.shape[1] != b_shape[0]:
        raise DimensionMismatch("spmm", a.shape, b_shape)
    out = a @ b
    if sp.issparse(out):
        out = out.toarray()
    out = np.asarray(out, dtype=np.float64)
    if out.ndim == 1:
        out = out.reshape(a.shape[0], -1)
    if not np.isfinite(out).all():
        raise ValueError("spmm produced non-finite values")
    return out


def _check_square_symmetric(a: np.ndarray, op: str, tol: float) -> None:
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"{op}: matrix must be square, got shape {a.shape}")
    if a.size:
        asym = float(np.max(np.abs(a - a.T)))
        if asym > tol:
            raise NotSymmetric(f"{op}: matrix asymmetry {asym:.3e} exceeds {tol:.0e}")


def cholesky(a) -> np.ndarray:
    """Lower-triangular Cholesky factor of a symmetric positive definite matrix.

    Raises NotPositiveDefinite with the failing pivot index when the matrix is
    not positive definite.
    """
    a = dense_matrix(a)
    _check_square_symmetric(a, "cholesky", 1e-9 * max(1.0, float(np.abs(a).max(initial=0.0))))
    if a.shape[0] == 0:
        return a.copy()
    c, info = scipy.linalg.lapack.dpotrf(a, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        raise NotPositiveDefinite(pivot=int(info) - 1)
    if info < 0:
        raise ValueError(f"cholesky: invalid argument {-info} to dpotrf")
    return np.ascontiguousarray(c)


def sym_eigs_topk(a, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-k eigenpairs of a symmetric matrix, eigenvalues descending.

    Returns (eigenvalues, eigenvectors) with eigenvectors in columns, computed
    by a dense LAPACK solver (tridiagonalization based). Cost is O(n^3); the
    gram matrices this library feeds in are desk scale, so correctness wins
    over scalability.
    """
    a = dense_matrix(a)
    _check_square_symmetric(a, "sym_eigs_topk", 1e-9)
    n = a.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"sym_eigs_topk: k={k} outside [1, {n}]")
    vals, vecs = scipy.linalg.eigh(a, subset_by_index=(n - k, n - 1))
    order = np.argsort(-vals, kind="stable")
    return vals[order], np.ascontiguousarray(vecs[:, order])
