"""Linear-kernel spectral clustering over code matrices.

The document-topic matrix comes from the standard normalized-cuts recipe on
the gram (linear-kernel) matrix of the top-layer codes: zero the diagonal,
symmetrically normalize by degree, take the top-c eigenvectors, normalize the
rows, and k-means the embedded points. Hard mode emits one-hot assignment
columns; embed mode emits the row-normalized embedding itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ._seeds import make_rng
from .linalg import dense_matrix, sym_eigs_topk

_MODES = ("hard", "embed")


@dataclass(frozen=True)
class SpectralConfig:
    n_clusters: int
    mode: str = "hard"
    kmeans_restarts: int = 10
    kmeans_max_iters: int = 300
    seed: int = 0

    def __post_init__(self):
        if self.n_clusters < 2:
            raise ValueError("n_clusters must be >= 2")
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}")
        if self.kmeans_restarts < 1:
            raise ValueError("kmeans_restarts must be >= 1")
        if self.kmeans_max_iters < 1:
            raise ValueError("kmeans_max_iters must be >= 1")


@dataclass(frozen=True)
class DocTopicMatrix:
    """Per-document topic weights, one column per document (c x N)."""

    weights: np.ndarray
    mode: str

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}")
        w = self.weights
        if w.ndim != 2:
            raise ValueError("weights must be 2-D")
        if self.mode == "hard":
            if not np.isin(w, (0.0, 1.0)).all() or not (w.sum(axis=0) == 1.0).all():
                raise ValueError("hard-mode columns must be one-hot")
        else:
            norms = np.linalg.norm(w, axis=0)
            nonzero = norms > 0
            if nonzero.any() and np.abs(norms[nonzero] - 1.0).max() > 1e-9:
                raise ValueError("embed-mode columns must have unit norm (or be zero)")

    @property
    def n_topics(self) -> int:
        return self.weights.shape[0]

    @property
    def n_docs(self) -> int:
        return self.weights.shape[1]


def gram(codes) -> np.ndarray:
    """Linear kernel K = codes^T codes, densified.

    Accumulates dense row blocks through BLAS; sparse-times-sparse products
    degenerate on top-layer codes, whose rows are long cluster indicators.
    """
    if sp.issparse(codes):
        x = sp.csr_array(codes)
        rows, n = x.shape
        if rows == 0 or n == 0:
            raise ValueError("gram requires a non-empty codes matrix")
        out = np.zeros((n, n), dtype=np.float64)
        block = max(1, (1 << 22) // max(1, n))
        for r0 in range(0, rows, block):
            b = x[r0 : min(rows, r0 + block), :].toarray()
            out += b.T @ b
        return out
    x = dense_matrix(codes)
    if x.size == 0:
        raise ValueError("gram requires a non-empty codes matrix")
    return x.T @ x


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding; degenerate all-coincident remainders fall back to
    uniform draws."""
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    centers[0] = points[int(rng.integers(n))]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = float(d2.sum())
        if total > 0.0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.integers(n))
        centers[j] = points[idx]
        d2 = np.minimum(d2, ((points - centers[j]) ** 2).sum(axis=1))
    return centers


def _lloyd(
    points: np.ndarray, centers: np.ndarray, max_iters: int
) -> tuple[np.ndarray, np.ndarray, float]:
    """Lloyd iterations with deterministic empty-cluster repair.

    An empty cluster is re-seeded with the point farthest from its assigned
    center (ties toward the lowest point index); repair forces another
    iteration, so fully degenerate inputs run to max_iters and stop.
    """
    n, k = points.shape[0], centers.shape[0]
    prev = None
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iters):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1)
        repaired = False
        counts = np.bincount(labels, minlength=k)
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            own = d2[np.arange(n), labels]
            order = np.argsort(-own, kind="stable")
            take = 0
            for e in empty:
                while take < n and counts[labels[order[take]]] <= 1:
                    take += 1
                if take >= n:
                    break
                point = order[take]
                counts[labels[point]] -= 1
                labels[point] = e
                counts[e] = 1
                centers[e] = points[point]
                take += 1
                repaired = True
        for j in range(k):
            members = labels == j
            if members.any():
                centers[j] = points[members].mean(axis=0)
        if prev is not None and not repaired and (labels == prev).all():
            break
        prev = labels
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    inertia = float(d2[np.arange(n), labels].sum())
    return labels, centers, inertia


def kmeans(
    points: np.ndarray,
    k: int,
    restarts: int = 10,
    max_iters: int = 300,
    seed: int = 0,
) -> np.ndarray:
    """k-means++ with restarts; returns the lowest-inertia labeling.

    Restart r draws from a stream derived from (seed, r), and ties in inertia
    keep the lowest restart index, so results do not depend on evaluation
    order.
    """
    points = dense_matrix(points)
    if not 1 <= k <= points.shape[0]:
        raise ValueError(f"k={k} outside 1..{points.shape[0]}")
    best_labels = None
    best_inertia = np.inf
    for r in range(restarts):
        rng = make_rng(seed, "kmeans", r)
        centers = _kmeans_pp_init(points, k, rng)
        labels, _, inertia = _lloyd(points, centers.copy(), max_iters)
        if inertia < best_inertia:
            best_inertia = inertia
            best_labels = labels
    return best_labels


def spectral_cluster(kernel, config: SpectralConfig) -> DocTopicMatrix:
    """Normalized spectral clustering of a symmetric non-negative kernel.

    Degree-zero documents pass through the normalization as zero rows; their
    embedding stays at the origin and hard labels fall out of k-means like any
    other point.
    """
    k = dense_matrix(kernel)
    n = k.shape[0]
    if k.shape[0] != k.shape[1]:
        raise ValueError(f"kernel must be square, got {k.shape}")
    scale = max(1.0, float(np.abs(k).max(initial=0.0)))
    if float(np.max(np.abs(k - k.T))) > 1e-9 * scale:
        raise ValueError("kernel must be symmetric")
    if k.min(initial=0.0) < 0:
        raise ValueError("kernel must be non-negative")
    c = config.n_clusters
    if c > n:
        raise ValueError(f"n_clusters={c} exceeds {n} documents")

    a = k.copy()
    np.fill_diagonal(a, 0.0)
    deg = a.sum(axis=1)
    dinv = np.divide(1.0, np.sqrt(deg), out=np.zeros_like(deg), where=deg > 0)
    m = a * np.outer(dinv, dinv)

    _, vecs = sym_eigs_topk(m, c)
    norms = np.linalg.norm(vecs, axis=1)
    embedding = np.divide(
        vecs, norms[:, None], out=np.zeros_like(vecs), where=norms[:, None] > 0
    )
    if config.mode == "embed":
        return DocTopicMatrix(np.ascontiguousarray(embedding.T), "embed")

    labels = kmeans(
        embedding,
        c,
        restarts=config.kmeans_restarts,
        max_iters=config.kmeans_max_iters,
        seed=config.seed,
    )
    w = np.zeros((c, n), dtype=np.float64)
    w[labels, np.arange(n)] = 1.0
    return DocTopicMatrix(w, "hard")


def hard_labels(w) -> np.ndarray:
    """Per-column argmax topic ids (ties toward the lowest topic index)."""
    weights = w.weights if isinstance(w, DocTopicMatrix) else dense_matrix(w)
    return np.argmax(weights, axis=0)
