"""End-to-end orchestration: corpus, weighting, codes, clusters, topics, report.

A run is fully determined by (config, master seed): stage seeds derive from
the master seed through fixed mixing, directory walks and vocabularies are
sorted, and artifacts are written in deterministic formats. Wall-clock
timings are the one exception; they go to the report and a timings sidecar,
never into hashed artifacts.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import mmio
from ._seeds import derive_seed
from .corpus import (
    Corpus,
    TokenizerConfig,
    ingest_text_dir,
    ingest_uci_bow,
    load_corpus,
    make_synthetic_corpus,
    subsample_topics,
    tfidf,
)
from .lasso import LassoConfig, TopicWordMatrix, solve_topic_words, top_words
from .mbn import MbnConfig, save_mbn_model, train_mbn, validate_codes
from .metrics import (
    CoherenceConfig,
    EvalReport,
    append_csv_row,
    clustering_accuracy,
    coherence_with_flags,
    report_to_kv,
    report_to_tsv,
    similarity_count,
)
from .spectral import DocTopicMatrix, SpectralConfig, gram, hard_labels, spectral_cluster

_SOURCE_KINDS = ("corpus-dir", "text-dir", "uci-bow", "synthetic")


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name and original cause."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class CorpusSource:
    kind: str
    path: str = ""
    vocab_path: str = ""
    tokenizer: TokenizerConfig = TokenizerConfig()
    synthetic_topics: int = 3
    synthetic_docs_per_topic: int = 100
    synthetic_seed: int = 0

    def __post_init__(self):
        if self.kind not in _SOURCE_KINDS:
            raise ValueError(f"source kind must be one of {_SOURCE_KINDS}")

    def load(self) -> Corpus:
        if self.kind == "corpus-dir":
            return load_corpus(self.path)
        if self.kind == "text-dir":
            return ingest_text_dir(self.path, self.tokenizer)
        if self.kind == "uci-bow":
            return ingest_uci_bow(self.path, self.vocab_path)
        return make_synthetic_corpus(
            self.synthetic_topics,
            docs_per_topic=self.synthetic_docs_per_topic,
            seed=self.synthetic_seed,
        )


@dataclass(frozen=True)
class RunConfig:
    """Everything one run needs; sub-configs default from the master seed."""

    n_topics: int
    out_dir: str
    master_seed: int = 0
    jobs: int = 1
    source: CorpusSource | None = None
    mbn: MbnConfig | None = None
    spectral: SpectralConfig | None = None
    lasso: LassoConfig = LassoConfig()
    coherence: CoherenceConfig = CoherenceConfig()

    def __post_init__(self):
        if self.n_topics < 2:
            raise ValueError("n_topics must be >= 2")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        if self.mbn is None:
            object.__setattr__(
                self,
                "mbn",
                MbnConfig(n_topics=self.n_topics, seed=derive_seed(self.master_seed, "mbn")),
            )
        if self.spectral is None:
            object.__setattr__(
                self,
                "spectral",
                SpectralConfig(
                    n_clusters=self.n_topics, seed=derive_seed(self.master_seed, "spectral")
                ),
            )
        if self.mbn.n_topics != self.n_topics:
            raise ValueError("mbn.n_topics must match run n_topics")
        if self.spectral.n_clusters != self.n_topics:
            raise ValueError("spectral.n_clusters must match run n_topics")


@dataclass(frozen=True)
class RunArtifacts:
    run_dir: Path
    tfidf_path: Path
    model_dir: Path
    doc_topic_path: Path
    topic_word_path: Path
    report_path: Path
    manifest_path: Path


def _flatten_config(config: RunConfig) -> dict[str, str]:
    out = {
        "run.n_topics": config.n_topics,
        "run.master_seed": config.master_seed,
        "run.jobs": config.jobs,
    }
    for section, sub in (
        ("mbn", config.mbn),
        ("spectral", config.spectral),
        ("lasso", config.lasso),
        ("coherence", config.coherence),
    ):
        for f in dataclasses.fields(sub):
            value = getattr(sub, f.name)
            if isinstance(value, frozenset):
                value = len(value)
            out[f"{section}.{f.name}"] = value
    if config.source is not None:
        out["corpus.kind"] = config.source.kind
        if config.source.path:
            out["corpus.path"] = config.source.path
    return {k: str(v) for k, v in out.items()}


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _hash_artifacts(run_dir: Path) -> dict[str, str]:
    skip = {"manifest.txt", "timings.txt"}
    out = {}
    for path in sorted(run_dir.rglob("*")):
        if path.is_dir() or path.name in skip:
            continue
        out[f"hash.{path.relative_to(run_dir).as_posix()}"] = _sha256(path)
    return out


def verify_artifacts(run_dir) -> None:
    """Check every hashed artifact against the manifest; raises on mismatch."""
    run_dir = Path(run_dir)
    manifest = mmio.read_manifest(run_dir / "manifest.txt")
    recorded = {k: v for k, v in manifest.items() if k.startswith("hash.")}
    if not recorded:
        raise ValueError(f"{run_dir}: manifest has no artifact hashes")
    current = _hash_artifacts(run_dir)
    for key, digest in recorded.items():
        if current.get(key) != digest:
            raise ValueError(f"{run_dir}: artifact {key[5:]} does not match its manifest hash")


def _ranked_word_lists(
    twm: TopicWordMatrix, corpus: Corpus, config: RunConfig
) -> list[list[str]]:
    depth = min(corpus.n_words, max(config.coherence.top_m, config.n_topics))
    return top_words(twm, corpus.vocabulary, depth)


def evaluate_run(
    corpus: Corpus,
    doc_topic: DocTopicMatrix,
    twm: TopicWordMatrix,
    config: RunConfig,
    timings: dict | None = None,
) -> EvalReport:
    """Assemble the metric report for one fitted model."""
    ranked = _ranked_word_lists(twm, corpus, config)
    m_eff = min(config.coherence.top_m, corpus.n_words)
    coh = []
    skipped = 0
    for words in ranked:
        value, bad = coherence_with_flags(words[:m_eff], corpus, config.coherence)
        coh.append(value)
        skipped += bad
    simc = similarity_count(ranked, min(config.n_topics, corpus.n_words))
    acc = None
    if corpus.labels is not None:
        acc = clustering_accuracy(hard_labels(doc_topic), np.asarray(corpus.labels))
    return EvalReport(
        acc=acc,
        coherence_per_topic=tuple(coh),
        coherence_mean=float(np.mean(coh)),
        similarity_count=simc,
        n_topics=config.n_topics,
        n_docs=corpus.n_docs,
        seed=config.master_seed,
        config=_flatten_config(config),
        timings=dict(timings or {}),
        skipped_pairs=skipped,
    )


def run_pipeline(config: RunConfig, corpus: Corpus | None = None) -> tuple[RunArtifacts, EvalReport]:
    """Run the full chain and persist every stage's outputs.

    On a stage failure the partial outputs stay on disk and the manifest is
    written with a FAILED marker naming the stage.
    """
    run_dir = Path(config.out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest: dict[str, str] = dict(_flatten_config(config))
    timings: dict[str, float] = {}

    def stage(name, fn):
        t0 = time.perf_counter()
        try:
            result = fn()
        except Exception as exc:
            manifest["status"] = "FAILED"
            manifest["failed_stage"] = name
            manifest["error"] = str(exc).replace("\n", " ")[:500]
            manifest.update(_hash_artifacts(run_dir))
            mmio.write_manifest(run_dir / "manifest.txt", manifest)
            raise StageError(name, exc) from exc
        timings[name] = time.perf_counter() - t0
        return result

    if corpus is None:
        if config.source is None:
            raise ValueError("run_pipeline needs a corpus or a configured source")
        corpus = stage("ingest", config.source.load)
    else:
        timings["ingest"] = 0.0
    manifest["corpus.n_docs"] = str(corpus.n_docs)
    manifest["corpus.n_words"] = str(corpus.n_words)

    def _tfidf():
        weighted = tfidf(corpus)
        mmio.write_matrix_market(run_dir / "d.mtx", weighted.matrix)
        mmio.write_lines(run_dir / "idf.txt", (repr(v) for v in weighted.idf))
        return weighted

    weighted = stage("tfidf", _tfidf)

    def _mbn():
        model = train_mbn(weighted, config.mbn, jobs=config.jobs)
        model_dir = run_dir / "mbn"
        if config.mbn.keep_centroids:
            save_mbn_model(model, model_dir)
        else:
            model_dir.mkdir(parents=True, exist_ok=True)
            mmio.write_manifest(
                model_dir / "manifest.txt",
                {
                    "n_topics": config.mbn.n_topics,
                    "n_clusterings": config.mbn.n_clusterings,
                    "shrink": repr(config.mbn.shrink),
                    "top_k_override": config.mbn.top_k_override,
                    "seed": config.mbn.seed,
                    "n_layers": model.schedule.n_layers,
                    "ks": ",".join(str(k) for k in model.schedule.ks),
                    "metrics": ",".join(layer.metric for layer in model.layers),
                },
            )
            mmio.write_matrix_market(model_dir / "codes.mtx", model.codes)
        return model

    model = stage("mbn", _mbn)

    def _spectral():
        doc_topic = spectral_cluster(gram(model.codes), config.spectral)
        mmio.write_matrix_market(run_dir / "w.mtx", doc_topic.weights)
        return doc_topic

    doc_topic = stage("spectral", _spectral)

    def _lasso():
        twm = solve_topic_words(doc_topic, weighted, config.lasso)
        mmio.write_matrix_market(run_dir / "c.mtx", twm.coefficients)
        return twm

    twm = stage("lasso", _lasso)

    def _eval():
        report = evaluate_run(corpus, doc_topic, twm, config, timings)
        ranked = _ranked_word_lists(twm, corpus, config)
        blocks = []
        for g, words in enumerate(ranked):
            blocks.append(f"# topic {g}")
            blocks.extend(words[: min(config.coherence.top_m, corpus.n_words)])
            blocks.append("")
        (run_dir / "topics.txt").write_text("\n".join(blocks), encoding="utf-8")
        (run_dir / "report.tsv").write_text(report_to_tsv(report), encoding="utf-8")
        (run_dir / "report.kv").write_text(report_to_kv(report), encoding="utf-8")
        return report

    report = stage("eval", _eval)

    manifest["status"] = "OK"
    manifest["mode"] = doc_topic.mode
    manifest["seed.mbn"] = str(config.mbn.seed)
    manifest["seed.spectral"] = str(config.spectral.seed)
    manifest.update(_hash_artifacts(run_dir))
    mmio.write_manifest(run_dir / "manifest.txt", manifest)
    mmio.write_manifest(
        run_dir / "timings.txt", {f"seconds_{k}": f"{v:.3f}" for k, v in timings.items()}
    )
    return (
        RunArtifacts(
            run_dir=run_dir,
            tfidf_path=run_dir / "d.mtx",
            model_dir=run_dir / "mbn",
            doc_topic_path=run_dir / "w.mtx",
            topic_word_path=run_dir / "c.mtx",
            report_path=run_dir / "report.tsv",
            manifest_path=run_dir / "manifest.txt",
        ),
        report,
    )


def rerun_from_codes(config: RunConfig, corpus: Corpus) -> tuple[Path, Path]:
    """Recompute W and C from persisted top-layer codes (stage isolation).

    Reads codes.mtx from the run directory, replays the spectral and lasso
    stages, overwrites w.mtx and c.mtx, and returns their paths.
    """
    run_dir = Path(config.out_dir)
    codes = mmio.read_matrix_market(run_dir / "mbn" / "codes.mtx")
    mf = mmio.read_manifest(run_dir / "mbn" / "manifest.txt")
    validate_codes(codes, int(mf["n_clusterings"]), int(mf["ks"].split(",")[-1]))
    weighted = tfidf(corpus)
    doc_topic = spectral_cluster(gram(codes), config.spectral)
    mmio.write_matrix_market(run_dir / "w.mtx", doc_topic.weights)
    twm = solve_topic_words(doc_topic, weighted, config.lasso)
    mmio.write_matrix_market(run_dir / "c.mtx", twm.coefficients)
    return run_dir / "w.mtx", run_dir / "c.mtx"


@dataclass(frozen=True)
class MonteCarloReport:
    runs: int
    acc_mean: float | None
    acc_std: float | None
    coherence_mean: float
    coherence_std: float
    simc_mean: float
    simc_std: float
    reports: tuple[EvalReport, ...]
    csv_path: Path


def _mean_std(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), std


def run_monte_carlo(
    config: RunConfig, c: int, runs: int, corpus: Corpus | None = None
) -> MonteCarloReport:
    """Repeat: subsample c gold topics, run the pipeline, collect metrics.

    Run r subsamples with a seed derived from (master, r) only, so sweeps over
    other hyperparameters see identical per-run subsets.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if corpus is None:
        if config.source is None:
            raise ValueError("run_monte_carlo needs a corpus or a configured source")
        corpus = config.source.load()
    if corpus.labels is None:
        raise ValueError("run_monte_carlo requires a labeled corpus")
    if corpus.n_labels < c:
        raise ValueError(f"corpus has {corpus.n_labels} gold topics, need >= {c}")

    out_root = Path(config.out_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    csv_path = out_root / "runs.csv"
    if csv_path.exists():
        csv_path.unlink()

    reports = []
    for r in range(runs):
        sub_seed = derive_seed(config.master_seed, "subsample", r)
        sub = subsample_topics(corpus, c, sub_seed)
        run_config = dataclasses.replace(
            config,
            n_topics=c,
            out_dir=str(out_root / f"run{r:03d}"),
            mbn=dataclasses.replace(
                config.mbn, n_topics=c, seed=derive_seed(config.master_seed, "mbn", r)
            ),
            spectral=dataclasses.replace(
                config.spectral,
                n_clusters=c,
                seed=derive_seed(config.master_seed, "spectral", r),
            ),
        )
        _, report = run_pipeline(run_config, sub)
        append_csv_row(csv_path, f"run{r:03d}", report)
        reports.append(report)

    accs = [rep.acc for rep in reports if rep.acc is not None]
    acc_mean, acc_std = _mean_std(accs) if accs else (None, None)
    coh_mean, coh_std = _mean_std([rep.coherence_mean for rep in reports])
    simc_mean, simc_std = _mean_std([rep.similarity_count for rep in reports])
    summary = {
        "runs": runs,
        "c": c,
        "acc_mean": acc_mean,
        "acc_std": acc_std,
        "coherence_mean": coh_mean,
        "coherence_std": coh_std,
        "simc_mean": simc_mean,
        "simc_std": simc_std,
    }
    mmio.write_manifest(out_root / "mc_summary.kv", summary)
    return MonteCarloReport(
        runs=runs,
        acc_mean=acc_mean,
        acc_std=acc_std,
        coherence_mean=coh_mean,
        coherence_std=coh_std,
        simc_mean=simc_mean,
        simc_std=simc_std,
        reports=tuple(reports),
        csv_path=csv_path,
    )


_SWEEPABLE = ("n_clusterings", "shrink")


def sweep(
    config: RunConfig,
    parameter: str,
    values,
    runs: int,
    corpus: Corpus | None = None,
) -> tuple[list[tuple[float, float, float]], Path]:
    """One Monte-Carlo batch per hyperparameter value; CSV of ACC mean/std."""
    if parameter not in _SWEEPABLE:
        raise ValueError(f"parameter must be one of {_SWEEPABLE}")
    values = list(values)
    if not values:
        raise ValueError("empty sweep values")
    for v in values:
        if parameter == "n_clusterings" and int(v) < 1:
            raise ValueError(f"invalid n_clusterings {v}")
        if parameter == "shrink" and not 0.0 < float(v) < 1.0:
            raise ValueError(f"invalid shrink {v}")
    if corpus is None:
        if config.source is None:
            raise ValueError("sweep needs a corpus or a configured source")
        corpus = config.source.load()

    out_root = Path(config.out_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    rows = []
    for v in values:
        value = int(v) if parameter == "n_clusterings" else float(v)
        tag = f"{parameter}_{value}".replace(".", "p")
        sub_config = dataclasses.replace(
            config,
            out_dir=str(out_root / tag),
            mbn=dataclasses.replace(config.mbn, **{parameter: value}),
        )
        mc = run_monte_carlo(sub_config, config.n_topics, runs, corpus)
        if mc.acc_mean is None:
            raise ValueError("sweep requires a labeled corpus (no ACC available)")
        rows.append((float(value), mc.acc_mean, mc.acc_std))
    csv_path = out_root / "sweep.csv"
    lines = ["value,acc_mean,acc_std"]
    for value, mean, std in rows:
        lines.append(f"{value:g},{mean:.6f},{std:.6f}")
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return rows, csv_path


_CONFIG_COERCERS = {
    "run.n_topics": int,
    "run.out_dir": str,
    "run.master_seed": int,
    "run.jobs": int,
    "corpus.kind": str,
    "corpus.path": str,
    "corpus.vocab_path": str,
    "corpus.min_token_len": int,
    "corpus.min_df": int,
    "corpus.synthetic_topics": int,
    "corpus.synthetic_docs_per_topic": int,
    "corpus.synthetic_seed": int,
    "mbn.n_clusterings": int,
    "mbn.shrink": float,
    "mbn.top_k_override": lambda s: None if s in ("", "None", "none") else int(s),
    "mbn.keep_centroids": lambda s: s.lower() in ("1", "true", "yes"),
    "mbn.seed": int,
    "spectral.mode": str,
    "spectral.kmeans_restarts": int,
    "spectral.kmeans_max_iters": int,
    "spectral.seed": int,
    "lasso.lam": float,
    "lasso.lam_mode": str,
    "lasso.rho": float,
    "lasso.abs_tol": float,
    "lasso.rel_tol": float,
    "lasso.max_iters": int,
    "lasso.nonneg": lambda s: s.lower() in ("1", "true", "yes"),
    "coherence.epsilon": float,
    "coherence.top_m": int,
}


def load_run_config(path=None, overrides: dict[str, str] | None = None) -> RunConfig:
    """Build a RunConfig from an INI file plus flat section.key overrides.

    Every key in the file can be overridden; unknown keys are rejected with
    the offending name.
    """
    raw: dict[str, str] = {}
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(str(path))
        if not read:
            raise FileNotFoundError(f"config file not found: {path}")
        for section in parser.sections():
            for key, value in parser.items(section):
                raw[f"{section}.{key}"] = value
    for key, value in (overrides or {}).items():
        raw[key] = str(value)

    unknown = sorted(set(raw) - set(_CONFIG_COERCERS))
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    typed = {k: _CONFIG_COERCERS[k](v) for k, v in raw.items()}

    def section(name):
        return {k.split(".", 1)[1]: v for k, v in typed.items() if k.startswith(name + ".")}

    run_kw = section("run")
    if "n_topics" not in run_kw:
        raise ValueError("config must set run.n_topics")
    if "out_dir" not in run_kw:
        raise ValueError("config must set run.out_dir")
    n_topics = run_kw["n_topics"]
    master_seed = run_kw.get("master_seed", 0)

    corpus_kw = section("corpus")
    source = None
    if "kind" in corpus_kw:
        tok = TokenizerConfig(
            min_token_len=corpus_kw.pop("min_token_len", 2),
            min_df=corpus_kw.pop("min_df", 2),
        )
        source = CorpusSource(tokenizer=tok, **corpus_kw)

    mbn_kw = section("mbn")
    mbn_kw.setdefault("seed", derive_seed(master_seed, "mbn"))
    spectral_kw = section("spectral")
    spectral_kw.setdefault("seed", derive_seed(master_seed, "spectral"))
    return RunConfig(
        n_topics=n_topics,
        out_dir=run_kw["out_dir"],
        master_seed=master_seed,
        jobs=run_kw.get("jobs", 1),
        source=source,
        mbn=MbnConfig(n_topics=n_topics, **mbn_kw),
        spectral=SpectralConfig(n_clusters=n_topics, **spectral_kw),
        lasso=LassoConfig(**section("lasso")),
        coherence=CoherenceConfig(**section("coherence")),
    )
