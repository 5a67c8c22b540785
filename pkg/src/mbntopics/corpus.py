"""Text corpora: ingestion, vocabulary building and TF-IDF weighting.

A corpus is a word-by-document count matrix plus the vocabulary, per-document
ids and optional gold topic labels. Ingestion is deterministic: directory
walks are sorted, vocabularies are sorted, and identical inputs produce
bit-identical matrices.
"""

from __future__ import annotations

import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from . import mmio
from .stopwords import ENGLISH_STOPWORDS

logger = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"[a-z]+")


class CorpusFormatError(ValueError):
    """Malformed corpus input; carries the offending path/line when known."""

    def __init__(self, message: str, path=None, line_no: int | None = None):
        where = ""
        if path is not None:
            where += f"{path}"
        if line_no is not None:
            where += f":{line_no}"
        super().__init__(f"{where}: {message}" if where else message)
        self.path = path
        self.line_no = line_no


@dataclass(frozen=True)
class TokenizerConfig:
    """Knobs for the plain-text tokenizer.

    Tokens are lowercased ASCII-letter runs. Stemming, n-grams and non-ASCII
    tokenization are intentionally not implemented.
    """

    min_token_len: int = 2
    min_df: int = 2
    stopwords: frozenset[str] = ENGLISH_STOPWORDS

    def __post_init__(self):
        if self.min_token_len < 1:
            raise ValueError("min_token_len must be >= 1")
        if self.min_df < 1:
            raise ValueError("min_df must be >= 1")

    def summary(self) -> dict[str, str]:
        return {
            "tokenizer.min_token_len": str(self.min_token_len),
            "tokenizer.min_df": str(self.min_df),
            "tokenizer.stopwords": str(len(self.stopwords)),
        }


def tokenize(text: str, config: TokenizerConfig = TokenizerConfig()) -> list[str]:
    """Lowercased ASCII-letter tokens, length and stopword filtered."""
    return [
        t
        for t in _TOKEN_RE.findall(text.lower())
        if len(t) >= config.min_token_len and t not in config.stopwords
    ]


@dataclass(frozen=True)
class Corpus:
    """Vocabulary, raw term counts (words x docs) and optional gold labels."""

    vocabulary: tuple[str, ...]
    counts: sp.csc_array
    doc_ids: tuple[str, ...]
    labels: tuple[int, ...] | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.vocabulary)) != len(self.vocabulary):
            raise ValueError("vocabulary entries must be unique")
        if any(not w for w in self.vocabulary):
            raise ValueError("vocabulary entries must be non-empty")
        if self.counts.shape != (len(self.vocabulary), len(self.doc_ids)):
            raise ValueError(
                f"counts shape {self.counts.shape} does not match "
                f"{len(self.vocabulary)} words x {len(self.doc_ids)} docs"
            )
        data = self.counts.data
        if data.size and ((data < 0).any() or (data != np.round(data)).any()):
            raise ValueError("counts must be non-negative integers stored as reals")
        if self.labels is not None:
            if len(self.labels) != len(self.doc_ids):
                raise ValueError("labels length must equal the number of documents")
            present = set(self.labels)
            if present != set(range(len(present))):
                raise ValueError("label ids must be contiguous from 0")

    @property
    def n_words(self) -> int:
        return len(self.vocabulary)

    @property
    def n_docs(self) -> int:
        return len(self.doc_ids)

    @property
    def n_labels(self) -> int:
        return 0 if self.labels is None else len(set(self.labels))


@dataclass(frozen=True)
class TfidfMatrix:
    """TF-IDF weighted document-term matrix with its weighting metadata."""

    matrix: sp.csc_array
    idf: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        if (self.matrix.data < 0).any():
            raise ValueError("tf-idf entries must be non-negative")
        if self.normalized:
            norms = np.sqrt(np.asarray(self.matrix.power(2).sum(axis=0)).ravel())
            nonzero = norms > 0
            if nonzero.any() and np.abs(norms[nonzero] - 1.0).max() > 1e-9:
                raise ValueError("non-zero columns must have unit Euclidean norm")

    @property
    def n_words(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_docs(self) -> int:
        return self.matrix.shape[1]


def _counts_from_token_docs(
    token_docs: Sequence[Sequence[str]], config: TokenizerConfig
) -> tuple[tuple[str, ...], sp.csc_array, int]:
    """Vocabulary (sorted, df >= min_df) and counts; returns #empty columns."""
    df: Counter = Counter()
    for tokens in token_docs:
        df.update(set(tokens))
    vocabulary = tuple(sorted(w for w, d in df.items() if d >= config.min_df))
    if not vocabulary:
        raise CorpusFormatError("empty corpus: no vocabulary words survive filtering")
    index = {w: i for i, w in enumerate(vocabulary)}

    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    empty_docs = 0
    for tokens in token_docs:
        tf = Counter(t for t in tokens if t in index)
        if not tf:
            empty_docs += 1
        for w in sorted(tf):
            indices.append(index[w])
            data.append(float(tf[w]))
        indptr.append(len(indices))
    counts = sp.csc_array(
        (
            np.asarray(data, dtype=np.float64),
            np.asarray(indices, dtype=np.int64),
            np.asarray(indptr, dtype=np.int64),
        ),
        shape=(len(vocabulary), len(token_docs)),
    )
    counts.sort_indices()
    return vocabulary, counts, empty_docs


def ingest_text_dir(root, config: TokenizerConfig = TokenizerConfig()) -> Corpus:
    """Ingest a directory tree: one subdirectory per gold label, text files inside.

    Unreadable files are skipped with a warning (the count lands in the corpus
    meta). Files are read as latin-1 so byte content never aborts ingestion.
    """
    root = Path(root)
    if not root.is_dir():
        raise CorpusFormatError("not a directory", path=root)
    label_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not label_dirs:
        raise CorpusFormatError("no label subdirectories", path=root)

    token_docs: list[list[str]] = []
    doc_ids: list[str] = []
    labels: list[int] = []
    label_names: list[str] = []
    skipped = 0
    for label_dir in label_dirs:
        files = sorted(p for p in label_dir.rglob("*") if not p.is_dir())
        docs_before = len(token_docs)
        for path in files:
            try:
                text = path.read_text(encoding="latin-1")
            except OSError as exc:
                logger.warning("skipping unreadable file %s: %s", path, exc)
                skipped += 1
                continue
            token_docs.append(tokenize(text, config))
            doc_ids.append(str(path.relative_to(root)))
            labels.append(len(label_names))
        if len(token_docs) == docs_before:
            logger.warning("label directory %s has no readable files; dropped", label_dir)
        else:
            label_names.append(label_dir.name)
    if not token_docs:
        raise CorpusFormatError("empty corpus: no readable documents", path=root)

    vocabulary, counts, empty_docs = _counts_from_token_docs(token_docs, config)
    if empty_docs:
        logger.warning("%d documents produced no vocabulary tokens", empty_docs)
    meta = {
        "source": str(root),
        "skipped_files": str(skipped),
        "empty_docs": str(empty_docs),
        "label_names": ",".join(label_names),
    }
    meta.update(config.summary())
    return Corpus(vocabulary, counts, tuple(doc_ids), tuple(labels), meta)


def corpus_from_documents(
    texts: Sequence[str],
    doc_ids: Sequence[str],
    labels: Sequence[int] | None = None,
    config: TokenizerConfig = TokenizerConfig(),
    meta: dict | None = None,
) -> Corpus:
    """Build a corpus from in-memory document strings."""
    token_docs = [tokenize(t, config) for t in texts]
    vocabulary, counts, empty_docs = _counts_from_token_docs(token_docs, config)
    full_meta = {"empty_docs": str(empty_docs)}
    full_meta.update(config.summary())
    if meta:
        full_meta.update(meta)
    return Corpus(
        vocabulary,
        counts,
        tuple(doc_ids),
        None if labels is None else tuple(int(l) for l in labels),
        full_meta,
    )


def ingest_uci_bow(docword_path, vocab_path) -> Corpus:
    """Ingest the UCI bag-of-words format (header N, v, nnz; then 1-based triples).

    Words absent from every document are retained in the vocabulary.
    """
    docword_path = Path(docword_path)
    vocab_path = Path(vocab_path)
    lines = mmio.read_lines(docword_path)
    if len(lines) < 3:
        raise CorpusFormatError("missing 3-line header", path=docword_path, line_no=1)

    def _int(line: str, line_no: int, expect: int) -> tuple[int, ...]:
        parts = line.split()
        if len(parts) != expect:
            raise CorpusFormatError(
                f"expected {expect} integer(s), got {line.strip()!r}",
                path=docword_path,
                line_no=line_no,
            )
        try:
            return tuple(int(p) for p in parts)
        except ValueError:
            raise CorpusFormatError(
                f"expected integer(s), got {line.strip()!r}",
                path=docword_path,
                line_no=line_no,
            ) from None

    (n_docs,) = _int(lines[0], 1, 1)
    (n_words,) = _int(lines[1], 2, 1)
    (nnz,) = _int(lines[2], 3, 1)
    if n_docs < 1 or n_words < 1 or nnz < 0:
        raise CorpusFormatError("header values must be positive", path=docword_path, line_no=1)

    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    seen: set[tuple[int, int]] = set()
    triples = 0
    for line_no, line in enumerate(lines[3:], start=4):
        if not line.strip():
            continue
        doc_id, word_id, count = _int(line, line_no, 3)
        if not 1 <= doc_id <= n_docs:
            raise CorpusFormatError(
                f"docID {doc_id} outside declared range 1..{n_docs}",
                path=docword_path,
                line_no=line_no,
            )
        if not 1 <= word_id <= n_words:
            raise CorpusFormatError(
                f"wordID {word_id} outside declared range 1..{n_words}",
                path=docword_path,
                line_no=line_no,
            )
        if count < 0:
            raise CorpusFormatError(
                f"negative count {count}", path=docword_path, line_no=line_no
            )
        key = (word_id - 1, doc_id - 1)
        if key in seen:
            raise CorpusFormatError(
                f"duplicate (docID, wordID) pair ({doc_id}, {word_id})",
                path=docword_path,
                line_no=line_no,
            )
        seen.add(key)
        rows.append(word_id - 1)
        cols.append(doc_id - 1)
        vals.append(float(count))
        triples += 1
    if triples != nnz:
        raise CorpusFormatError(
            f"header declares {nnz} triples but file has {triples}", path=docword_path
        )

    vocabulary = tuple(mmio.read_lines(vocab_path))
    if len(vocabulary) != n_words:
        raise CorpusFormatError(
            f"vocabulary has {len(vocabulary)} entries, header declares {n_words}",
            path=vocab_path,
        )
    counts = sp.csc_array(
        (np.asarray(vals), (np.asarray(rows), np.asarray(cols))),
        shape=(n_words, n_docs),
    )
    counts.sort_indices()
    doc_ids = tuple(f"doc{i + 1:06d}" for i in range(n_docs))
    meta = {"source": str(docword_path), "format": "uci-bow"}
    return Corpus(vocabulary, counts, doc_ids, None, meta)


def write_uci_bow(corpus: Corpus, docword_path, vocab_path) -> None:
    """Write counts in UCI bag-of-words format (inverse of ingest_uci_bow)."""
    coo = sp.coo_array(corpus.counts)
    order = np.lexsort((coo.row, coo.col))
    lines = [str(corpus.n_docs), str(corpus.n_words), str(coo.nnz)]
    for t in order:
        lines.append(f"{int(coo.col[t]) + 1} {int(coo.row[t]) + 1} {int(coo.data[t])}")
    Path(docword_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    mmio.write_lines(vocab_path, corpus.vocabulary)


def tfidf(corpus: Corpus) -> TfidfMatrix:
    """TF-IDF weighting: tf(w, d) * ln(N / df(w)), then unit-norm columns.

    Words present in every document get weight exactly zero (no smoothing);
    zero columns are left zero so document ids stay stable.
    """
    if corpus.n_docs == 0 or corpus.n_words == 0:
        raise ValueError("tfidf requires a non-empty corpus")
    n = corpus.n_docs
    df = np.asarray((corpus.counts > 0).sum(axis=1)).ravel().astype(np.float64)
    idf = np.zeros(corpus.n_words, dtype=np.float64)
    present = df > 0
    idf[present] = np.log(n / df[present])
    weighted = sp.csc_array(sp.diags_array(idf) @ corpus.counts)
    norms = np.sqrt(np.asarray(weighted.power(2).sum(axis=0)).ravel())
    scale = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
    matrix = sp.csc_array(weighted @ sp.diags_array(scale))
    matrix.sort_indices()
    return TfidfMatrix(matrix, idf, normalized=True)


def subsample_topics(corpus: Corpus, c: int, seed: int, min_df: int = 2) -> Corpus:
    """Sub-corpus of all documents whose gold label is among c sampled labels.

    Labels are re-indexed 0..c-1 by sorted order of the sampled ids; the
    vocabulary is re-pruned to words with df >= min_df inside the subset.
    """
    if corpus.labels is None:
        raise ValueError("subsample_topics requires gold labels")
    n_labels = corpus.n_labels
    if not 1 <= c <= n_labels:
        raise ValueError(f"c={c} outside 1..{n_labels}")
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(n_labels, size=c, replace=False))
    remap = {int(old): rank for rank, old in enumerate(chosen)}

    labels = np.asarray(corpus.labels)
    keep_docs = np.flatnonzero(np.isin(labels, chosen))
    sub_counts = sp.csc_array(corpus.counts[:, keep_docs])
    df = np.asarray((sub_counts > 0).sum(axis=1)).ravel()
    keep_words = np.flatnonzero(df >= min_df)
    if keep_words.size == 0:
        raise CorpusFormatError("empty corpus: subsample left no vocabulary")
    sub_counts = sp.csc_array(sp.csr_array(sub_counts)[keep_words, :])
    sub_counts.sort_indices()

    meta = dict(corpus.meta)
    meta["subsample.labels"] = ",".join(str(int(x)) for x in chosen)
    meta["subsample.seed"] = str(seed)
    return Corpus(
        vocabulary=tuple(corpus.vocabulary[i] for i in keep_words),
        counts=sub_counts,
        doc_ids=tuple(corpus.doc_ids[i] for i in keep_docs),
        labels=tuple(remap[int(l)] for l in labels[keep_docs]),
        meta=meta,
    )


def make_synthetic_corpus(
    n_topics: int,
    docs_per_topic: int = 100,
    vocab_size: int = 500,
    exclusive_mass: float = 0.9,
    min_tokens: int = 50,
    max_tokens: int = 150,
    seed: int = 0,
) -> Corpus:
    """Multinomial topics with mostly disjoint vocabularies, for tests/demos.

    Each topic puts ``exclusive_mass`` uniformly on its own word block and the
    rest on a shared pool, so near-perfect clustering is expected.
    """
    if n_topics < 1:
        raise ValueError("n_topics must be >= 1")
    block = vocab_size // (n_topics + 1)
    if block < 1:
        raise ValueError("vocab_size too small for the requested topic count")
    rng = np.random.default_rng(seed)
    shared_start = n_topics * block
    distributions = []
    for g in range(n_topics):
        p = np.zeros(vocab_size)
        p[g * block : (g + 1) * block] = exclusive_mass / block
        p[shared_start:] = (1.0 - exclusive_mass) / (vocab_size - shared_start)
        distributions.append(p / p.sum())

    cols = []
    labels = []
    for g in range(n_topics):
        for _ in range(docs_per_topic):
            length = int(rng.integers(min_tokens, max_tokens + 1))
            cols.append(rng.multinomial(length, distributions[g]).astype(np.float64))
            labels.append(g)
    counts = sp.csc_array(np.column_stack(cols))
    counts.sort_indices()
    vocabulary = tuple(f"w{i:04d}" for i in range(vocab_size))
    doc_ids = tuple(f"synth{i:05d}" for i in range(len(labels)))
    meta = {"source": "synthetic", "synthetic.seed": str(seed)}
    return Corpus(vocabulary, counts, doc_ids, tuple(labels), meta)


def save_corpus(corpus: Corpus, out_dir) -> None:
    """Persist a corpus as Matrix Market counts + vocab/labels/doc-id files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mmio.write_matrix_market(out / "counts.mtx", corpus.counts)
    mmio.write_lines(out / "vocabulary.txt", corpus.vocabulary)
    mmio.write_lines(out / "doc_ids.txt", corpus.doc_ids)
    if corpus.labels is not None:
        mmio.write_lines(out / "labels.txt", corpus.labels)
    manifest = {"n_docs": corpus.n_docs, "n_words": corpus.n_words,
                "has_labels": corpus.labels is not None}
    manifest.update({k: v for k, v in sorted(corpus.meta.items())})
    mmio.write_manifest(out / "manifest.txt", manifest)


def load_corpus(in_dir) -> Corpus:
    src = Path(in_dir)
    counts = mmio.read_matrix_market(src / "counts.mtx")
    vocabulary = tuple(mmio.read_lines(src / "vocabulary.txt"))
    doc_ids = tuple(mmio.read_lines(src / "doc_ids.txt"))
    labels = None
    if (src / "labels.txt").exists():
        labels = tuple(int(x) for x in mmio.read_lines(src / "labels.txt"))
    meta = {}
    if (src / "manifest.txt").exists():
        meta = {
            k: v
            for k, v in mmio.read_manifest(src / "manifest.txt").items()
            if k not in ("n_docs", "n_words", "has_labels")
        }
    return Corpus(vocabulary, sp.csc_array(counts), doc_ids, labels, meta)
