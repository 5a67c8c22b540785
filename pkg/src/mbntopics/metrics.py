"""Evaluation metrics: clustering accuracy, topic coherence, topic overlap.

Accuracy scores the best one-to-one mapping of predicted clusters onto gold
classes. Coherence is the UMass-style sum over ranked top-word pairs of the
log smoothed co-document frequency over the earlier word's document
frequency. The similarity count totals pairwise overlap of the topics'
leading-c word lists; lower is better.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .corpus import Corpus

logger = logging.getLogger(__name__)

CSV_HEADER = ("run_id", "c", "seed", "acc", "coh_mean", "simc")


@dataclass(frozen=True)
class CoherenceConfig:
    epsilon: float = 0.01
    top_m: int = 10

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.top_m < 2:
            raise ValueError("top_m must be >= 2")


@dataclass(frozen=True)
class EvalReport:
    acc: float | None
    coherence_per_topic: tuple[float, ...]
    coherence_mean: float
    similarity_count: float
    n_topics: int
    n_docs: int
    seed: int
    config: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    skipped_pairs: int = 0

    def __post_init__(self):
        if self.acc is not None and not 0.0 <= self.acc <= 1.0:
            raise ValueError("acc must lie in [0, 1]")
        if self.similarity_count < 0:
            raise ValueError("similarity_count must be >= 0")


def clustering_accuracy(pred: Sequence[int], gold: Sequence[int]) -> float:
    """Best one-to-one cluster-to-class matching rate (optimal assignment).

    Unequal cluster/class counts are handled by zero padding; relabeling
    either argument does not change the score.
    """
    pred = np.asarray(pred)
    gold = np.asarray(gold)
    if pred.shape != gold.shape or pred.ndim != 1:
        raise ValueError(f"label lengths differ: {pred.shape} vs {gold.shape}")
    if pred.size == 0:
        raise ValueError("empty label lists")
    _, pi = np.unique(pred, return_inverse=True)
    _, gi = np.unique(gold, return_inverse=True)
    size = max(pi.max(), gi.max()) + 1
    confusion = np.zeros((size, size), dtype=np.int64)
    np.add.at(confusion, (pi, gi), 1)
    rows, cols = linear_sum_assignment(confusion, maximize=True)
    return float(confusion[rows, cols].sum()) / pred.size


def _presence(corpus: Corpus, words: Sequence[str]) -> np.ndarray:
    index = {w: i for i, w in enumerate(corpus.vocabulary)}
    missing = [w for w in words if w not in index]
    if missing:
        raise ValueError(f"words not in vocabulary: {missing}")
    rows = np.asarray([index[w] for w in words])
    dense = corpus.counts[rows, :].toarray() if rows.size else np.zeros((0, corpus.n_docs))
    return dense > 0


def coherence(
    topic_words: Sequence[str],
    corpus: Corpus,
    config: CoherenceConfig = CoherenceConfig(),
) -> float:
    """UMass-style coherence of one ranked word list.

    Sums ln((co_docs(w_t, w_l) + epsilon) / docs(w_l)) over ordered pairs with
    l < t; frequencies are document counts from the binarized raw counts.
    Pairs whose earlier word occurs in no document are skipped (and flagged).
    """
    value, _ = coherence_with_flags(topic_words, corpus, config)
    return value


def coherence_with_flags(
    topic_words: Sequence[str],
    corpus: Corpus,
    config: CoherenceConfig = CoherenceConfig(),
) -> tuple[float, int]:
    """Coherence plus the number of skipped undefined pairs."""
    present = _presence(corpus, topic_words)
    doc_freq = present.sum(axis=1)
    total = 0.0
    skipped = 0
    m = len(topic_words)
    for t in range(1, m):
        for l in range(t):
            if doc_freq[l] == 0:
                skipped += 1
                continue
            co = int((present[t] & present[l]).sum())
            total += math.log((co + config.epsilon) / doc_freq[l])
    if skipped:
        logger.warning(
            "coherence skipped %d pairs with zero document frequency", skipped
        )
    return total, skipped


def similarity_count(topic_word_lists: Sequence[Sequence[str]], c: int) -> float:
    """Total pairwise overlap of the topics' leading-c word lists."""
    if c < 1:
        raise ValueError("c must be >= 1")
    heads = []
    for g, words in enumerate(topic_word_lists):
        if len(words) < c:
            raise ValueError(f"topic {g} has {len(words)} words, need at least {c}")
        heads.append(set(words[:c]))
    total = 0
    for g in range(len(heads)):
        for h in range(g + 1, len(heads)):
            total += len(heads[g] & heads[h])
    return float(total)


def report_to_kv(report: EvalReport) -> str:
    lines = [
        f"acc={'' if report.acc is None else repr(report.acc)}",
        f"coherence_mean={report.coherence_mean!r}",
        f"similarity_count={report.similarity_count!r}",
        f"n_topics={report.n_topics}",
        f"n_docs={report.n_docs}",
        f"seed={report.seed}",
        f"skipped_pairs={report.skipped_pairs}",
    ]
    for g, value in enumerate(report.coherence_per_topic):
        lines.append(f"coherence_topic_{g}={value!r}")
    for stage, seconds in report.timings.items():
        lines.append(f"seconds_{stage}={seconds:.3f}")
    return "\n".join(lines) + "\n"


def report_to_tsv(report: EvalReport) -> str:
    header = ["acc", "coh_mean", "simc", "c", "n", "seed"]
    values = [
        "" if report.acc is None else f"{report.acc:.6f}",
        f"{report.coherence_mean:.6f}",
        f"{report.similarity_count:.6f}",
        str(report.n_topics),
        str(report.n_docs),
        str(report.seed),
    ]
    return "\t".join(header) + "\n" + "\t".join(values) + "\n"


def append_csv_row(path, run_id: str, report: EvalReport) -> None:
    """Append one run to a batch CSV, writing the header on first use."""
    path = Path(path)
    fresh = not path.exists() or path.stat().st_size == 0
    with path.open("a", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if fresh:
            writer.writerow(CSV_HEADER)
        writer.writerow(
            [
                run_id,
                report.n_topics,
                report.seed,
                "" if report.acc is None else f"{report.acc:.6f}",
                f"{report.coherence_mean:.6f}",
                f"{report.similarity_count:.6f}",
            ]
        )
