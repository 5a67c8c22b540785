"""Multilayer bootstrap network: stacked ensembles of k-centroids clusterings.

Each layer draws V independent sets of k centroid columns from its input
(sampling without replacement) and encodes every input column as a one-hot
indicator of its nearest centroid; the V one-hot blocks are stacked into the
layer's output. Layers shrink k geometrically, k_1 = floor(N/2) and
k_{l+1} = floor(shrink * k_l), down to a top size of about 1.5x the target
cluster count, which keeps the layer hierarchy tree-like.

Similarity is cosine at the first layer (the inputs are TF-IDF columns) and
plain dot product at the hidden layers, where every code column has constant
norm sqrt(V) so the two rankings coincide.

Training is transductive: the model encodes the corpus it was trained on and
makes no attempt to encode unseen documents.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import mmio
from ._seeds import derive_seed, make_rng
from .corpus import TfidfMatrix
from .linalg import as_sparse

_METRICS = ("cosine", "dot")


class SchedulingError(ValueError):
    pass


@dataclass(frozen=True)
class MbnConfig:
    """Hyperparameters of the network.

    n_clusterings is the ensemble width per layer, shrink the per-layer decay
    of k, n_topics the target cluster count. top_k_override forces the top
    layer's k directly (useful for strongly imbalanced corpora, where the
    1.5x-topics default under-samples small classes).
    """

    n_topics: int
    n_clusterings: int = 400
    shrink: float = 0.5
    top_k_override: int | None = None
    seed: int = 0
    keep_centroids: bool = False

    def __post_init__(self):
        if self.n_topics < 2:
            raise ValueError("n_topics must be >= 2")
        if self.n_clusterings < 1:
            raise ValueError("n_clusterings must be >= 1")
        if not 0.0 < self.shrink < 1.0:
            raise ValueError("shrink must be in (0, 1)")
        if self.top_k_override is not None and self.top_k_override < 2:
            raise ValueError("top_k_override must be >= 2")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True)
class KSchedule:
    """Strictly decreasing per-layer centroid counts."""

    ks: tuple[int, ...]

    def __post_init__(self):
        if not self.ks:
            raise ValueError("empty schedule")
        if any(k < 2 for k in self.ks):
            raise ValueError("every layer needs k >= 2")
        if any(a <= b for a, b in zip(self.ks, self.ks[1:])):
            raise ValueError("schedule must be strictly decreasing")

    @property
    def n_layers(self) -> int:
        return len(self.ks)

    @property
    def k_top(self) -> int:
        return self.ks[-1]


@dataclass(frozen=True)
class MbnLayer:
    """One trained layer: V centroid sets of k columns each.

    centroid_indices holds the sampled source column indices, in sampled
    order (ties in nearest-centroid assignment break toward the earliest
    sampled centroid). centroids holds by-value copies of the sampled columns
    when the layer was trained with keep_centroids, else None.
    """

    layer_index: int
    k: int
    metric: str
    centroid_indices: tuple[tuple[int, ...], ...]
    centroids: tuple[sp.csc_array, ...] | None = None

    def __post_init__(self):
        if self.metric not in _METRICS:
            raise ValueError(f"metric must be one of {_METRICS}")
        for s in self.centroid_indices:
            if len(set(s)) != self.k:
                raise ValueError("each centroid set needs k distinct source indices")

    @property
    def n_clusterings(self) -> int:
        return len(self.centroid_indices)


@dataclass(frozen=True)
class MbnModel:
    """Trained layer stack plus the top-layer code matrix (V*k_top x N)."""

    config: MbnConfig
    schedule: KSchedule
    layers: tuple[MbnLayer, ...]
    codes: sp.csc_array

    def __post_init__(self):
        validate_codes(self.codes, self.config.n_clusterings, self.schedule.k_top)

    @property
    def n_docs(self) -> int:
        return self.codes.shape[1]


def validate_codes(codes: sp.csc_array, n_clusterings: int, k: int) -> None:
    """Check the block one-hot structure: V blocks of length k, one 1 each."""
    v = n_clusterings
    rows, n = codes.shape
    if rows != v * k:
        raise ValueError(f"codes have {rows} rows, expected {v} * {k}")
    if codes.nnz != v * n or not (codes.data == 1.0).all():
        raise ValueError("every column must carry exactly V ones")
    if np.diff(codes.indptr).max(initial=v) != v or np.diff(codes.indptr).min(initial=v) != v:
        raise ValueError("every column must carry exactly V ones")
    blocks = codes.indices.reshape(n, v) // k
    if not (blocks == np.arange(v)[None, :]).all():
        raise ValueError("each block of k rows must hold exactly one 1 per column")


def build_schedule(n_docs: int, config: MbnConfig) -> KSchedule:
    """Per-layer centroid counts: halve-ish from floor(N/2) down to the top k.

    The top k defaults to ceil(1.5 * n_topics) so that, with high probability,
    every topic contributes at least one sampled centroid at the top layer;
    when the geometric sequence skips past the top k, an exact top-k layer is
    appended.
    """
    if n_docs < 4:
        raise SchedulingError(f"need at least 4 documents, got {n_docs}")
    if config.top_k_override is not None:
        k_top = config.top_k_override
    else:
        k_top = math.ceil(1.5 * config.n_topics)
    if n_docs < 2 * k_top:
        raise SchedulingError(
            f"top layer needs k={k_top} centroids but the first layer only has "
            f"floor(N/2)={n_docs // 2} to shrink from; need N >= {2 * k_top} "
            f"documents for this topic count"
        )
    ks = [n_docs // 2]
    while True:
        # the 1e-9 nudge keeps exact products like 0.3 * 10 from flooring low
        nxt = math.floor(config.shrink * ks[-1] + 1e-9)
        if nxt < k_top:
            break
        ks.append(nxt)
    if ks[-1] > k_top:
        ks.append(k_top)
    return KSchedule(tuple(ks))


def _unit_columns(x: sp.csc_array) -> sp.csc_array:
    norms = np.sqrt(np.asarray(x.power(2).sum(axis=0)).ravel())
    scale = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
    out = sp.csc_array(x @ sp.diags_array(scale))
    out.sort_indices()
    return out


def one_nn_assign(x, centroids, metric: str = "cosine") -> np.ndarray:
    """One-hot indicator of the most similar centroid column.

    Ties break toward the lowest centroid index. Zero vectors (either side)
    get similarity 0 under cosine, so empty documents flow through and land
    on centroid 0.
    """
    if metric not in _METRICS:
        raise ValueError(f"metric must be one of {_METRICS}")
    c = as_sparse(centroids)
    xv = np.asarray(x.toarray() if sp.issparse(x) else x, dtype=np.float64).ravel()
    if xv.shape[0] != c.shape[0]:
        raise ValueError(f"vector has dim {xv.shape[0]}, centroids have {c.shape[0]}")
    if metric == "cosine":
        c = _unit_columns(c)
        norm = float(np.linalg.norm(xv))
        xv = xv / norm if norm > 0 else np.zeros_like(xv)
    sims = c.T @ xv
    out = np.zeros(c.shape[1], dtype=np.float64)
    out[int(np.argmax(sims))] = 1.0
    return out


def _gram_rows(x: sp.csc_array, cols: np.ndarray, block: int = 4096) -> np.ndarray:
    """Rows of the gram matrix (x^T x)[cols, :], densified in column blocks."""
    n = x.shape[1]
    base = sp.csr_array(x[:, cols].T)
    out = np.empty((cols.size, n), dtype=np.float64)
    for j0 in range(0, n, block):
        j1 = min(n, j0 + block)
        out[:, j0:j1] = (base @ x[:, j0:j1]).toarray()
    return out


def _codes_from_labels(labels: np.ndarray, k: int) -> sp.csc_array:
    """Stack one-hot blocks: column d gets a 1 at row i*k + labels[d, i]."""
    n, v = labels.shape
    offsets = (np.arange(v, dtype=np.int64) * k)[None, :]
    indices = (labels.astype(np.int64) + offsets).ravel()
    indptr = np.arange(0, v * n + 1, v, dtype=np.int64)
    data = np.ones(n * v, dtype=np.float64)
    return sp.csc_array((data, indices, indptr), shape=(v * k, n))


def train_layer(
    inputs,
    k: int,
    n_clusterings: int,
    layer_seed: int,
    metric: str = "cosine",
    layer_index: int = 0,
    jobs: int = 1,
    keep_centroids: bool = True,
) -> tuple[MbnLayer, sp.csc_array]:
    """Train one layer: V samplings of k centroids plus nearest-centroid codes.

    Each clustering's sample comes from a stream derived from
    (layer_seed, clustering index), so results do not depend on execution
    order or worker count.
    """
    if metric not in _METRICS:
        raise ValueError(f"metric must be one of {_METRICS}")
    x = as_sparse(inputs)
    n = x.shape[1]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must be within 1..{n} (columns available)")
    samples = np.stack(
        [
            make_rng(layer_seed, i).choice(n, size=k, replace=False)
            for i in range(n_clusterings)
        ]
    )

    xs = _unit_columns(x) if metric == "cosine" else x
    uniq = np.unique(samples)
    gram_rows = _gram_rows(xs, uniq)
    pos = np.searchsorted(uniq, samples)

    labels = np.empty((n, n_clusterings), dtype=np.int32)

    def assign(i: int) -> None:
        labels[:, i] = np.argmax(gram_rows[pos[i]], axis=0)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(assign, range(n_clusterings)))
    else:
        for i in range(n_clusterings):
            assign(i)

    centroids = None
    if keep_centroids:
        centroids = tuple(sp.csc_array(x[:, s]) for s in samples)
    layer = MbnLayer(
        layer_index=layer_index,
        k=k,
        metric=metric,
        centroid_indices=tuple(tuple(int(i) for i in s) for s in samples),
        centroids=centroids,
    )
    return layer, _codes_from_labels(labels, k)


def train_mbn(weighted, config: MbnConfig, jobs: int = 1) -> MbnModel:
    """Train the full layer stack bottom-up on a TF-IDF matrix.

    Layer 1 consumes the TF-IDF columns under cosine similarity; every later
    layer consumes the previous layer's stacked codes under dot product.
    """
    x = weighted.matrix if isinstance(weighted, TfidfMatrix) else as_sparse(weighted)
    schedule = build_schedule(x.shape[1], config)
    layers: list[MbnLayer] = []
    current = x
    codes = None
    for li, k in enumerate(schedule.ks):
        layer, codes = train_layer(
            current,
            k,
            config.n_clusterings,
            layer_seed=derive_seed(config.seed, "mbn-layer", li),
            metric="cosine" if li == 0 else "dot",
            layer_index=li,
            jobs=jobs,
            keep_centroids=config.keep_centroids,
        )
        layers.append(layer)
        current = codes
    return MbnModel(config, schedule, tuple(layers), codes)


def save_mbn_model(model: MbnModel, out_dir) -> None:
    """Persist a model: per-layer centroid matrices plus a key=value manifest.

    Requires a model trained with keep_centroids=True so layers are
    self-contained on disk.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "n_topics": model.config.n_topics,
        "n_clusterings": model.config.n_clusterings,
        "shrink": repr(model.config.shrink),
        "top_k_override": model.config.top_k_override,
        "seed": model.config.seed,
        "n_layers": model.schedule.n_layers,
        "ks": ",".join(str(k) for k in model.schedule.ks),
        "metrics": ",".join(layer.metric for layer in model.layers),
    }
    mmio.write_manifest(out / "manifest.txt", manifest)
    mmio.write_matrix_market(out / "codes.mtx", model.codes)
    for layer in model.layers:
        if layer.centroids is None:
            raise ValueError(
                "model was trained without keep_centroids; layers are not "
                "self-contained and cannot be persisted"
            )
        stacked = sp.csc_array(sp.hstack(layer.centroids, format="csc"))
        mmio.write_matrix_market(out / f"layer{layer.layer_index:02d}_centroids.mtx", stacked)
        mmio.write_lines(
            out / f"layer{layer.layer_index:02d}_sources.txt",
            (" ".join(str(i) for i in s) for s in layer.centroid_indices),
        )


def load_mbn_model(in_dir) -> MbnModel:
    src = Path(in_dir)
    mf = mmio.read_manifest(src / "manifest.txt")
    config = MbnConfig(
        n_topics=int(mf["n_topics"]),
        n_clusterings=int(mf["n_clusterings"]),
        shrink=float(mf["shrink"]),
        top_k_override=None if mf["top_k_override"] == "None" else int(mf["top_k_override"]),
        seed=int(mf["seed"]),
        keep_centroids=True,
    )
    ks = tuple(int(k) for k in mf["ks"].split(","))
    metrics = mf["metrics"].split(",")
    layers = []
    for li, (k, metric) in enumerate(zip(ks, metrics)):
        stacked = mmio.read_matrix_market(src / f"layer{li:02d}_centroids.mtx")
        sources = tuple(
            tuple(int(i) for i in line.split())
            for line in mmio.read_lines(src / f"layer{li:02d}_sources.txt")
        )
        centroids = tuple(
            sp.csc_array(stacked[:, j * k : (j + 1) * k]) for j in range(len(sources))
        )
        layers.append(
            MbnLayer(
                layer_index=li,
                k=k,
                metric=metric,
                centroid_indices=sources,
                centroids=centroids,
            )
        )
    codes = mmio.read_matrix_market(src / "codes.mtx")
    return MbnModel(config, KSchedule(ks), tuple(layers), sp.csc_array(codes))
