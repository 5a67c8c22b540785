"""Loaders for the 20-newsgroups corpus.

The corpus is not shipped with the library. Two discovery paths exist:

* MBNTOPICS_20NEWS_DIR pointing at an extracted tree, either one directory
  per newsgroup or the usual pair of ``*-train`` / ``*-test`` roots that each
  hold the group directories;
* an existing scikit-learn download cache (when scikit-learn is installed),
  i.e. whatever ``fetch_20newsgroups`` has already stored locally.
"""

from __future__ import annotations

import os
from pathlib import Path

from .corpus import Corpus, TokenizerConfig, corpus_from_documents, ingest_text_dir

ENV_VAR = "MBNTOPICS_20NEWS_DIR"


def _group_layout(root: Path) -> list[Path] | None:
    """Roots whose subdirectories are the newsgroup directories themselves,
    or a pair of train/test roots holding them; None when neither applies."""
    subdirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not subdirs:
        return None
    splits = [p for p in subdirs if p.name.endswith(("-train", "-test", "train", "test"))]
    if splits and all(any(q.is_dir() for q in p.iterdir()) for p in splits):
        return splits
    return [root]


def load_newsgroups_dir(root, config: TokenizerConfig = TokenizerConfig()) -> Corpus:
    """Ingest an extracted 20-newsgroups tree, merging train/test splits."""
    root = Path(root)
    roots = _group_layout(root)
    if roots is None:
        raise FileNotFoundError(f"{root}: no newsgroup directories found")
    if len(roots) == 1:
        return ingest_text_dir(roots[0], config)

    texts: list[str] = []
    doc_ids: list[str] = []
    group_of_doc: list[str] = []
    for split in roots:
        for group_dir in sorted(p for p in split.iterdir() if p.is_dir()):
            for path in sorted(p for p in group_dir.rglob("*") if not p.is_dir()):
                try:
                    texts.append(path.read_text(encoding="latin-1"))
                except OSError:
                    continue
                doc_ids.append(str(path.relative_to(root)))
                group_of_doc.append(group_dir.name)
    if not texts:
        raise FileNotFoundError(f"{root}: no readable documents")
    names = sorted(set(group_of_doc))
    labels = [names.index(g) for g in group_of_doc]
    meta = {"source": str(root), "label_names": ",".join(names)}
    return corpus_from_documents(texts, doc_ids, labels, config, meta)


def _load_from_sklearn_cache(config: TokenizerConfig) -> Corpus | None:
    try:
        from sklearn.datasets import fetch_20newsgroups
    except ImportError:
        return None
    try:
        bunch = fetch_20newsgroups(subset="all", download_if_missing=False)
    except Exception:
        return None
    doc_ids = [f"20news{i:06d}" for i in range(len(bunch.data))]
    meta = {"source": "sklearn-cache", "label_names": ",".join(bunch.target_names)}
    return corpus_from_documents(
        bunch.data, doc_ids, [int(t) for t in bunch.target], config, meta
    )


def load_newsgroups(config: TokenizerConfig = TokenizerConfig()) -> Corpus | None:
    """Locate and load 20-newsgroups, or None when no copy is available."""
    root = os.environ.get(ENV_VAR)
    if root and Path(root).is_dir():
        return load_newsgroups_dir(root, config)
    return _load_from_sklearn_cache(config)
