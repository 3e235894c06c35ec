"""Command-line entry point: ``d2drank <command> [options]``.

Exit status is 0 on success, 1 for usage errors (bad flags, bad config,
out-of-range parameters) and 2 for data errors (unreadable or malformed
inputs). Every file written is printed on its own line to stdout.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, RunConfig
from .corpus_io import parse_qrels, parse_topics, parse_trec_docs
from .embedding import (
    TrainingCorpus,
    build_training_corpus,
    load_vectors,
    save_vectors,
    train_paragraph_vectors,
    train_skipgram,
)
from .evaluation import (
    grid_search,
    paired_ttest,
    per_topic,
    quality_correlation,
    write_per_topic_csv,
    write_quality_csv,
    write_sweep_csv,
)
from .exceptions import D2DError
from .experiment import RerankExperiment, cross_validate
from .index import build_index, load_index, save_index
from .lexical import rank_bm25, rank_bm25_rocchio, rank_qlm, rank_qlm_rm3
from .rerank import rerank
from .runs import read_run, write_run

__all__ = ["main", "build_parser"]

log = logging.getLogger("d2drank")

COMMANDS = ("index", "rank", "train-embeddings", "rerank", "eval", "sweep", "quality-study")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


# flag dest -> config key
_FLAG_KEYS = {
    "corpus": "paths.corpus",
    "corpus_format": "paths.corpus_format",
    "index": "paths.index",
    "topics": "paths.topics",
    "topics_format": "paths.topics_format",
    "qrels": "paths.qrels",
    "vectors": "paths.vectors",
    "model": "rank.model",
    "prf": "rank.prf",
    "depth": "rank.depth",
    "doc_vec": "rerank.doc_vec",
    "mode": "rerank.mode",
    "lam": "rerank.lambda",
    "fb_k": "rerank.fb_k",
    "dim": "embedding.dim",
    "window": "embedding.window",
    "negatives": "embedding.negatives",
    "epochs": "embedding.epochs",
    "lr": "embedding.initial_lr",
    "min_count": "embedding.min_count",
    "top_n": "embedding.top_n",
    "metric": "eval.metric",
    "lambda_grid": "sweep.lambda_grid",
    "fbk_grid": "sweep.fbk_grid",
    "threads": "run.threads",
    "seed": "run.seed",
}


def _common(p):
    p.add_argument("--config", help="section.key=value settings file")
    p.add_argument("--threads", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("-q", "--quiet", action="store_true", help="suppress warnings and progress lines")


def _rerank_flags(p, lam=True):
    p.add_argument("--vectors", help="directory holding words.vec / docs.vec")
    p.add_argument("--doc-vec", choices=("pv", "add", "tfidf"))
    p.add_argument("--mode", choices=("d2d", "d2q"))
    p.add_argument("--index", help="index directory (needed for --doc-vec add|tfidf)")
    p.add_argument("--topics", help="topic file (needed for --mode d2q)")
    p.add_argument("--topics-format", choices=("auto", "tsv", "trec_sgml"))
    p.add_argument("--allow-missing", action="store_true",
                   help="give candidates without a vector a zero vector instead of failing")
    if lam:
        p.add_argument("--lambda", dest="lam", type=float)
        p.add_argument("--fb-k", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="d2drank", description="Lexical ranking and embedding-based re-ranking experiments.")
    sub = ap.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("index", help="build an inverted index")
    _common(p)
    p.add_argument("--corpus", help="TREC SGML or JSON-lines documents")
    p.add_argument("--corpus-format", choices=("auto", "trec_sgml", "jsonl"))
    p.add_argument("--out", required=True, help="index directory")

    p = sub.add_parser("rank", help="rank topics with BM25 or query likelihood")
    _common(p)
    p.add_argument("--index")
    p.add_argument("--topics")
    p.add_argument("--topics-format", choices=("auto", "tsv", "trec_sgml"))
    p.add_argument("--model", choices=("bm25", "qlm"))
    p.add_argument("--prf", choices=("none", "rocchio", "rm3"))
    p.add_argument("--depth", type=int)
    p.add_argument("--tag")
    p.add_argument("--out", required=True, help="run file")

    p = sub.add_parser("train-embeddings", help="train word (and document) vectors")
    _common(p)
    p.add_argument("--corpus")
    p.add_argument("--corpus-format", choices=("auto", "trec_sgml", "jsonl"))
    p.add_argument("--run", action="append", help="restrict training to the top documents of these runs")
    p.add_argument("--top-n", type=int)
    p.add_argument("--doc-vec", choices=("pv", "add"), help="pv trains document vectors too")
    p.add_argument("--dim", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--negatives", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--min-count", type=int)
    p.add_argument("--deterministic", action="store_true", help="force single-threaded training")
    p.add_argument("--out", required=True, help="vector directory")

    p = sub.add_parser("rerank", help="re-rank a run by semantic similarity")
    _common(p)
    p.add_argument("--run", required=True)
    _rerank_flags(p)
    p.add_argument("--out", required=True, help="run file")

    p = sub.add_parser("eval", help="evaluate a run")
    _common(p)
    p.add_argument("--run", required=True)
    p.add_argument("--qrels")
    p.add_argument("--metric")
    p.add_argument("--compare", help="second run for a paired t-test")
    p.add_argument("--out", help="per-topic CSV")

    p = sub.add_parser("sweep", help="grid search over lambda and k")
    _common(p)
    p.add_argument("--run", required=True)
    p.add_argument("--qrels")
    p.add_argument("--metric")
    _rerank_flags(p, lam=False)
    p.add_argument("--lambda-grid", help="lo:hi:step")
    p.add_argument("--fbk-grid", help="comma-separated k values")
    p.add_argument("--cv", action="store_true", help="two-fold parity cross-validation")
    p.add_argument("--cv-out", help="run file of the cross-validated re-ranking")
    p.add_argument("--out", help="sweep table CSV")

    p = sub.add_parser("quality-study", help="feedback quality against improvement")
    _common(p)
    p.add_argument("--run", required=True, help="baseline run")
    p.add_argument("--reranked", required=True)
    p.add_argument("--qrels")
    p.add_argument("--fb-k", type=int)
    p.add_argument("--out", help="per-topic CSV")
    return ap


def _config(args) -> RunConfig:
    overrides = {key: getattr(args, dest, None) for dest, key in _FLAG_KEYS.items()}
    if getattr(args, "deterministic", False):
        overrides["run.deterministic"] = "true"
    return RunConfig.load(args.config, overrides)


def _need(cfg: RunConfig, key: str, flag: str) -> Path:
    value = cfg[key]
    if not value:
        raise UsageError(f"missing {flag} (or {key} in the config file)")
    path = Path(value)
    if not path.exists():
        raise DataError(f"{flag}: {path} does not exist")
    return path


def _read_docs(cfg: RunConfig):
    path = _need(cfg, "paths.corpus", "--corpus")
    fmt = cfg["paths.corpus_format"]
    if fmt == "auto":
        fmt = "jsonl" if path.suffix in (".jsonl", ".json") else "trec_sgml"
    with open(path, "rb") as fh:
        return parse_trec_docs(fh, fmt, cfg.pipeline())


def _read_topics(cfg: RunConfig, pipeline):
    path = _need(cfg, "paths.topics", "--topics")
    fmt = cfg["paths.topics_format"]
    text = path.read_text(encoding="utf-8", errors="replace")
    if fmt == "auto":
        fmt = "trec_sgml" if "<top>" in text.lower() else "tsv"
    return parse_topics(text, fmt, pipeline)


def _read_qrels(cfg: RunConfig):
    with open(_need(cfg, "paths.qrels", "--qrels"), encoding="utf-8") as fh:
        return parse_qrels(fh)


def _read_run(path) -> list:
    if not Path(path).exists():
        raise DataError(f"run file {path} does not exist")
    return read_run(path)


def cmd_index(args, cfg):
    index = build_index(_read_docs(cfg), cfg.pipeline())
    out = Path(args.out)
    save_index(index, out)
    return [out / "index.bin", out / "manifest.txt"]


def cmd_rank(args, cfg):
    index = load_index(_need(cfg, "paths.index", "--index"))
    topics = _read_topics(cfg, index.pipeline)
    model, prf, depth = cfg["rank.model"], cfg["rank.prf"], cfg.get_int("rank.depth")
    if depth < 1:
        raise ConfigError("rank.depth must be >= 1")
    if model not in ("bm25", "qlm") or prf not in ("none", "rocchio", "rm3"):
        raise ConfigError(f"unknown model/prf {model}/{prf}")
    if (model, prf) in (("bm25", "rm3"), ("qlm", "rocchio")):
        raise UsageError(f"--prf {prf} is not available with --model {model}")
    runs = []
    for t in topics:
        if model == "bm25" and prf == "rocchio":
            rl = rank_bm25_rocchio(index, t, depth, cfg.bm25(), cfg.rocchio())
        elif model == "bm25":
            rl = rank_bm25(index, t, depth, cfg.bm25())
        elif prf == "rm3":
            rl = rank_qlm_rm3(index, t, depth, cfg.qlm(), cfg.rm3())
        else:
            rl = rank_qlm(index, t, depth, cfg.qlm())
        runs.append(rl)
    return [write_run(runs, args.out, args.tag)]


def cmd_train(args, cfg):
    docs = _read_docs(cfg)
    if args.run:
        runs = [rl for path in args.run for rl in _read_run(path)]
        corpus = build_training_corpus(runs, docs, cfg.get_int("embedding.top_n"))
    else:
        corpus = TrainingCorpus(list(docs))
    params = cfg.embedding()
    doc_vec = cfg["embedding.doc_vec"] if args.doc_vec is None else args.doc_vec
    if doc_vec not in ("pv", "add"):
        raise ConfigError(f"embedding.doc_vec must be pv or add, got {doc_vec!r}")
    train = train_paragraph_vectors if doc_vec == "pv" else train_skipgram
    store = train(corpus, params, cfg.pipeline(), verbose=not args.quiet)
    return save_vectors(store, args.out)


def _rerank_inputs(args, cfg):
    params = cfg.rerank()
    mode = cfg["rerank.mode"]
    if mode not in ("d2d", "d2q"):
        raise ConfigError(f"rerank.mode must be d2d or d2q, got {mode!r}")
    backend = params.doc_vector_backend
    vectors = None
    if backend != "tfidf_sparse" or mode == "d2q":
        vectors = load_vectors(_need(cfg, "paths.vectors", "--vectors"))
    index = None
    if backend != "pv":
        index = load_index(_need(cfg, "paths.index", "--index"))
    topics = None
    if mode == "d2q":
        if backend == "tfidf_sparse":
            raise UsageError("--mode d2q needs --doc-vec pv or add")
        topics = _read_topics(cfg, index.pipeline if index is not None else cfg.pipeline())
    return params, mode, vectors, index, topics


def cmd_rerank(args, cfg):
    params, mode, vectors, index, topics = _rerank_inputs(args, cfg)
    by_id = {t.topic_id: t for t in topics or ()}
    out = []
    for rl in _read_run(args.run):
        topic = by_id.get(rl.topic_id)
        if mode == "d2q" and topic is None:
            raise DataError(f"no topic text for topic {rl.topic_id}")
        out.append(rerank(rl, vectors, params, mode, topic=topic, index=index, allow_missing=args.allow_missing))
    return [write_run(out, args.out)]


def cmd_eval(args, cfg):
    metric = cfg.metric()
    qrels = _read_qrels(cfg)
    values = per_topic(_read_run(args.run), qrels, metric)
    if not values:
        raise DataError("no topic of the run has relevant documents in the qrels")
    mean = sum(values.values()) / len(values)
    print(f"{mean:.4f}")
    if args.compare:
        other = per_topic(_read_run(args.compare), qrels, metric)
        t, p = paired_ttest(values, other)
        other_mean = sum(other[k] for k in values if k in other) / max(1, len(set(values) & set(other)))
        print(f"compare {other_mean:.4f} t {t:.4f} p {p:.4g}")
    return [write_per_topic_csv(args.out, values, metric)] if args.out else []


def cmd_sweep(args, cfg):
    metric = cfg.metric()
    grid = cfg.grid()
    qrels = _read_qrels(cfg)
    params, mode, vectors, index, topics = _rerank_inputs(args, cfg)
    exp = RerankExperiment(_read_run(args.run), vectors, qrels, params.doc_vector_backend, mode, index,
                           topics, args.allow_missing)
    evaluable = [t for t in exp.topic_ids if qrels.relevant(t)]
    if not evaluable:
        raise DataError("no topic of the run has relevant documents in the qrels")
    written = []
    if args.cv:
        cv = cross_validate(exp, grid, metric)
        for split, best in cv.folds:
            print(f"fold {split.rule} lambda {best.lam:g} k {best.k} train_{metric} {best.value:.4f}")
        print(f"cv_{metric} {cv.mean:.4f}")
        table = [row for _, best in cv.folds for row in best.table]
        if args.cv_out:
            written.append(write_run(cv.runs, args.cv_out))
    else:
        best = grid_search(exp, grid, evaluable, metric)
        print(f"lambda {best.lam:g} k {best.k} {metric} {best.value:.4f}")
        table = best.table
    if args.out:
        written.append(write_sweep_csv(args.out, table))
    return written


def cmd_quality(args, cfg):
    qrels = _read_qrels(cfg)
    k = cfg.get_int("rerank.fb_k")
    study = quality_correlation(_read_run(args.run), _read_run(args.reranked), qrels, k)
    flag = " (degenerate)" if study.degenerate else ""
    print(f"pearson_r {study.pearson_r:.4f}{flag}")
    for name, value in study.buckets.items():
        print(f"bucket {name} {value:.4f}")
    print(f"topics {len(study.rows)} excluded {study.excluded}")
    return [write_quality_csv(args.out, study)] if args.out else []


_HANDLERS = {
    "index": cmd_index,
    "rank": cmd_rank,
    "train-embeddings": cmd_train,
    "rerank": cmd_rerank,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "quality-study": cmd_quality,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                            format="%(levelname)s: %(message)s")
        cfg = _config(args)
        written = _HANDLERS[args.command](args, cfg)
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"d2drank: usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, D2DError, OSError, ValueError, KeyError) as exc:
        print(f"d2drank: data error: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
