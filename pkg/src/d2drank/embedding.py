"""Word and document embeddings.

Skip-gram with negative sampling (SGNS) for words, a paragraph-vector
variant in which each document's id vector joins the context of every
word it contains, and two cheap document representations built from
an index: tf-idf weighted sums of word vectors and sparse tf-idf.
"""

from __future__ import annotations

import logging
import math
import sys
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from . import _sgns
from .corpus_io import Document, PipelineConfig, tokenize
from .exceptions import D2DError, ParseError
from .index import Index
from .lexical import idf, tfidf_weight
from .runs import RankedList

__all__ = [
    "EmbeddingParams",
    "VectorStore",
    "TrainingCorpus",
    "build_training_corpus",
    "sgns_pair_objective",
    "train_skipgram",
    "train_paragraph_vectors",
    "tfidf_weight",
    "doc_vector_term_addition",
    "term_addition_matrix",
    "doc_vector_tfidf_sparse",
    "tfidf_matrix",
    "normalize_unit",
    "save_vectors",
    "load_vectors",
]

log = logging.getLogger(__name__)

WORDS_FILE = "words.vec"
DOCS_FILE = "docs.vec"
NOISE_TABLE_SIZE = 1_000_000


@dataclass(frozen=True)
class EmbeddingParams:
    dim: int = 300
    window: int = 10
    negatives: int = 5
    epochs: int = 5
    initial_lr: float = 0.025
    min_count: int = 5
    seed: int = 1
    mode: str = "skipgram"
    threads: int = 1

    def __post_init__(self):
        if self.dim < 1 or self.window < 1 or self.negatives < 1:
            raise ValueError("dim, window and negatives must be >= 1")
        if self.epochs < 0 or self.min_count < 1 or self.threads < 1:
            raise ValueError("epochs must be >= 0, min_count and threads >= 1")
        if not self.initial_lr > 0:
            raise ValueError("initial_lr must be > 0")
        if self.mode not in ("skipgram", "paragraph_vector"):
            raise ValueError(f"unknown mode {self.mode!r}")


class VectorStore:
    """Word vectors, training-only context vectors, and document vectors.

    Rows of ``word_matrix`` follow ``words``; rows of ``doc_matrix`` follow
    ``doc_ids``. All matrices share one dimensionality.
    """

    def __init__(self, words: Sequence[str], word_matrix, doc_ids: Sequence[str] = (), doc_matrix=None,
                 context_matrix=None, dim: int | None = None):
        self.words = list(words)
        self.word_matrix = np.asarray(word_matrix, dtype=np.float64)
        if dim is None:
            dim = self.word_matrix.shape[1] if self.word_matrix.ndim == 2 else 0
        if self.word_matrix.size == 0:
            self.word_matrix = self.word_matrix.reshape(len(self.words), dim)
        self.doc_ids = list(doc_ids)
        self.doc_matrix = (np.zeros((0, dim)) if doc_matrix is None
                           else np.asarray(doc_matrix, dtype=np.float64).reshape(len(self.doc_ids), dim))
        self.context_matrix = None if context_matrix is None else np.asarray(context_matrix, dtype=np.float64)
        if self.word_matrix.shape != (len(self.words), dim) or self.doc_matrix.shape[1] != dim:
            raise ValueError("vector shapes disagree with keys or dimensionality")
        self.dim = dim
        self.word_index = {w: i for i, w in enumerate(self.words)}
        self.doc_index = {d: i for i, d in enumerate(self.doc_ids)}
        self.loss_history: list[float] = []

    @property
    def word_vectors(self) -> dict[str, np.ndarray]:
        return {w: self.word_matrix[i] for i, w in enumerate(self.words)}

    @property
    def doc_vectors(self) -> dict[str, np.ndarray]:
        return {d: self.doc_matrix[i] for i, d in enumerate(self.doc_ids)}

    def word_vector(self, term: str) -> np.ndarray:
        return self.word_matrix[self.word_index[term]]

    def doc_vector(self, doc_id: str) -> np.ndarray:
        return self.doc_matrix[self.doc_index[doc_id]]

    def __contains__(self, term):
        return term in self.word_index

    def with_doc_vectors(self, doc_ids: Sequence[str], matrix) -> "VectorStore":
        return VectorStore(self.words, self.word_matrix, doc_ids, matrix, self.context_matrix, self.dim)

    def unit(self) -> "VectorStore":
        """Copy with every nonzero row scaled to unit 2-norm."""
        return VectorStore(self.words, _unit_rows(self.word_matrix), self.doc_ids,
                           _unit_rows(self.doc_matrix), dim=self.dim)


def _unit_rows(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    return np.divide(m, norms, out=np.zeros_like(m), where=norms > 0)


def normalize_unit(vector, return_flag: bool = False):
    """Scale to unit 2-norm. A zero vector comes back unchanged; with
    ``return_flag`` the result is ``(vector, was_zero)``."""
    v = np.asarray(vector, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    out = v.copy() if norm == 0 else v / norm
    return (out, norm == 0) if return_flag else out


@dataclass
class TrainingCorpus:
    documents: list[Document]
    provenance: dict[int, list[str]] = field(default_factory=dict)

    def __len__(self):
        return len(self.documents)

    @property
    def doc_ids(self) -> list[str]:
        return [d.doc_id for d in self.documents]


def build_training_corpus(runs: Iterable[RankedList], corpus, top_n: int = 1000) -> TrainingCorpus:
    """Union of the top ``top_n`` documents of every run, first occurrence wins."""
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    by_id: Mapping[str, Document] = corpus if isinstance(corpus, Mapping) else {d.doc_id: d for d in corpus}
    docs: list[Document] = []
    seen: set[str] = set()
    provenance: dict[int, list[str]] = {}
    for rl in runs:
        ids = list(rl.doc_ids[:top_n])
        provenance[rl.topic_id] = ids
        for doc_id in ids:
            if doc_id in seen:
                continue
            if doc_id not in by_id:
                raise D2DError(f"run for topic {rl.topic_id} names {doc_id!r}, which is not in the corpus")
            seen.add(doc_id)
            docs.append(by_id[doc_id])
    return TrainingCorpus(docs, provenance)


def sgns_pair_objective(v_w, v_c, negative_cs):
    """Negative-sampling loss of one (word, context) pair and its gradients.

    loss = -log s(v_w.v_c) - sum_n log s(-v_w.v_n). Returns
    ``(loss, d_loss/d_v_w, d_loss/d_v_c, d_loss/d_v_n as an array)``.
    """
    v_w = np.asarray(v_w, dtype=np.float64)
    v_c = np.asarray(v_c, dtype=np.float64)
    negs = np.asarray(negative_cs, dtype=np.float64).reshape(-1, v_w.shape[0])
    pos = v_w @ v_c
    neg = negs @ v_w
    loss = np.logaddexp(0.0, -pos) + np.logaddexp(0.0, neg).sum()
    sig_pos = _sigmoid(pos)
    sig_neg = _sigmoid(neg)
    g_w = -(1.0 - sig_pos) * v_c + sig_neg @ negs
    g_c = -(1.0 - sig_pos) * v_w
    g_n = sig_neg[:, None] * v_w[None, :]
    return float(loss), g_w, g_c, g_n


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x)))


def _encode(corpus: TrainingCorpus, params: EmbeddingParams, config: PipelineConfig | None):
    token_lists = [tokenize(d.text, config) for d in corpus.documents]
    counts = Counter(t for toks in token_lists for t in toks)
    vocab = sorted((t for t, c in counts.items() if c >= params.min_count), key=lambda t: (-counts[t], t))
    if not vocab:
        raise D2DError("empty vocabulary after min_count pruning")
    ids = {t: i for i, t in enumerate(vocab)}
    starts = [0]
    flat: list[int] = []
    for toks in token_lists:
        flat.extend(ids[t] for t in toks if t in ids)
        starts.append(len(flat))
    freq = np.array([counts[t] for t in vocab], dtype=np.float64)
    return vocab, np.array(flat, dtype=np.int64), np.array(starts, dtype=np.int64), freq


def _noise_table(freq: np.ndarray) -> np.ndarray:
    # unigram^0.75, laid out as a lookup table
    p = freq ** 0.75
    cdf = np.cumsum(p / p.sum())
    slots = (np.arange(NOISE_TABLE_SIZE) + 0.5) / NOISE_TABLE_SIZE
    return np.minimum(np.searchsorted(cdf, slots), len(freq) - 1).astype(np.int64)


def _train(corpus: TrainingCorpus, params: EmbeddingParams, config, train_docs: bool,
           verbose: bool) -> VectorStore:
    if len(corpus) == 0:
        raise D2DError("training corpus is empty")
    vocab, tokens, starts, freq = _encode(corpus, params, config)
    rng = np.random.default_rng(params.seed)
    dim = params.dim
    w_in = (rng.random((len(vocab), dim)) - 0.5) / dim
    w_out = np.zeros((len(vocab), dim))
    n_docs = len(corpus) if train_docs else 0
    d_vecs = (rng.random((n_docs, dim)) - 0.5) / dim
    table = _noise_table(freq)
    total_steps = max(params.epochs * len(tokens), 1)
    if params.threads > 1:
        import numba

        numba.set_num_threads(min(params.threads, numba.config.NUMBA_NUM_THREADS))
        step = _sgns.train_epoch_parallel
    else:
        step = _sgns.train_epoch_serial
    history = []
    for epoch in range(params.epochs):
        loss, pairs = step(tokens, starts, w_in, w_out, d_vecs, table, params.window, params.negatives,
                           params.initial_lr, float(total_steps), float(epoch * len(tokens)),
                           params.seed, epoch, train_docs)
        mean = loss / max(pairs, 1)
        history.append(mean)
        if verbose:
            print(f"epoch {epoch + 1} loss {mean:.6f}", file=sys.stderr)
    doc_ids = corpus.doc_ids if train_docs else []
    store = VectorStore(vocab, w_in, doc_ids, d_vecs, w_out, dim)
    store.loss_history = history
    return store


def train_skipgram(corpus: TrainingCorpus, params: EmbeddingParams = EmbeddingParams(),
                   config: PipelineConfig | None = None, verbose: bool = False) -> VectorStore:
    """Train word vectors; ``threads > 1`` selects lock-free parallel updates."""
    return _train(corpus, replace(params, mode="skipgram"), config, False, verbose)


def train_paragraph_vectors(corpus: TrainingCorpus, params: EmbeddingParams = EmbeddingParams(),
                            config: PipelineConfig | None = None, verbose: bool = False) -> VectorStore:
    """Co-train word vectors and one vector per document.

    For every centre word, the document vector is scored against that
    word's output vector alongside the ordinary skip-gram pairs.
    """
    return _train(corpus, replace(params, mode="paragraph_vector"), config, True, verbose)


def doc_vector_term_addition(doc, word_vectors, index: Index, return_flag: bool = False):
    """Sum of tf-idf weighted word vectors over the distinct terms of ``doc``.

    ``word_vectors`` is a VectorStore or a term -> vector mapping. Terms
    without a vector are skipped; if none has one the zero vector is
    returned (flagged when ``return_flag``).
    """
    lookup = word_vectors.word_vectors if isinstance(word_vectors, VectorStore) else word_vectors
    if not lookup:
        raise ValueError("word_vectors is empty")
    dim = len(next(iter(lookup.values())))
    out = np.zeros(dim)
    hit = False
    for term, tf in index.doc_terms(doc).items():
        vec = lookup.get(term)
        if vec is None:
            continue
        out += tfidf_weight(tf, index.doc_frequency(term), index.N) * np.asarray(vec, dtype=np.float64)
        hit = True
    return (out, not hit) if return_flag else out


def tfidf_matrix(index: Index, doc_ids: Sequence[str] | None = None) -> sp.csr_matrix:
    """Rows of tf * idf for the given documents (all documents by default)."""
    X = index.doc_term_matrix()
    if doc_ids is not None:
        X = X[[index.ordinal(d) for d in doc_ids]]
    return sp.csr_matrix(X.multiply(idf(index.N, index.df)[None, :]))


def term_addition_matrix(index: Index, store: VectorStore, doc_ids: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    """Batch form of :func:`doc_vector_term_addition`.

    Returns ``(matrix, zero_mask)`` with one row per requested document.
    """
    W = tfidf_matrix(index, doc_ids)
    cols = np.array([store.word_index.get(t, -1) for t in index.terms])
    keep = np.flatnonzero(cols >= 0)
    sub = W[:, keep]
    out = np.asarray(sub @ store.word_matrix[cols[keep]])
    zero = np.asarray(sub.getnnz(axis=1) == 0).ravel()
    return out, zero


def doc_vector_tfidf_sparse(doc, index: Index) -> dict[str, float]:
    return {t: tfidf_weight(tf, index.doc_frequency(t), index.N) for t, tf in index.doc_terms(doc).items()}


def sparse_cosine(a: Mapping[str, float], b: Mapping[str, float]) -> float:
    na = math.sqrt(sum(v * v for v in a.values()))
    nb = math.sqrt(sum(v * v for v in b.values()))
    if na == 0 or nb == 0:
        return 0.0
    if len(b) < len(a):
        a, b = b, a
    return sum(v * b.get(t, 0.0) for t, v in a.items()) / (na * nb)


def _write_vec(path: Path, keys: Sequence[str], matrix: np.ndarray, dim: int):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(keys)} {dim}\n")
        for key, row in zip(keys, matrix):
            if not key or any(c.isspace() for c in key):
                raise ValueError(f"vector key {key!r} is empty or contains whitespace")
            fh.write(key + " " + " ".join(f"{x:.9g}" for x in row) + "\n")


def _read_vec(path: Path) -> tuple[list[str], np.ndarray, int]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ParseError("vector header must be 'count dim'", line=1)
        try:
            count, dim = int(header[0]), int(header[1])
        except ValueError:
            raise ParseError("vector header must hold two integers", line=1) from None
        keys = []
        rows = np.empty((count, dim))
        for lineno, line in enumerate(fh, 2):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != dim + 1:
                raise ParseError(f"expected {dim} values, found {len(parts) - 1}", line=lineno)
            if len(keys) == count:
                raise ParseError(f"more rows than the {count} announced in the header", line=lineno)
            try:
                rows[len(keys)] = [float(x) for x in parts[1:]]
            except ValueError:
                raise ParseError("non-numeric vector component", line=lineno) from None
            keys.append(parts[0])
    if len(keys) != count:
        raise ParseError(f"header announces {count} rows, file holds {len(keys)}", line=1)
    return keys, rows, dim


def save_vectors(store: VectorStore, path) -> list[Path]:
    """Write ``words.vec`` and, if there are document vectors, ``docs.vec``
    into directory ``path`` (word2vec text format, 9 significant digits)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    written = [path / WORDS_FILE]
    _write_vec(written[0], store.words, store.word_matrix, store.dim)
    docs = path / DOCS_FILE
    if store.doc_ids:
        _write_vec(docs, store.doc_ids, store.doc_matrix, store.dim)
        written.append(docs)
    elif docs.exists():
        docs.unlink()
    return written


def load_vectors(path) -> VectorStore:
    path = Path(path)
    words, wm, dim = _read_vec(path / WORDS_FILE)
    doc_ids, dm = [], None
    if (path / DOCS_FILE).exists():
        doc_ids, dm, ddim = _read_vec(path / DOCS_FILE)
        if ddim != dim:
            raise ParseError(f"docs.vec has dimension {ddim}, words.vec has {dim}", line=1)
    return VectorStore(words, wm, doc_ids, dm, dim=dim)
