"""scikit-learn style wrappers around the retrieval, embedding and re-ranking functions."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .corpus_io import Document, PipelineConfig, Topic
from .embedding import (
    EmbeddingParams,
    TrainingCorpus,
    term_addition_matrix,
    train_paragraph_vectors,
    train_skipgram,
)
from .exceptions import MissingVectorError
from .index import Index, build_index
from .lexical import (
    BM25Params,
    QLMParams,
    RM3Params,
    RocchioParams,
    rank_bm25,
    rank_bm25_rocchio,
    rank_qlm,
    rank_qlm_rm3,
)
from .rerank import RerankParams, rerank
from .runs import RankedList

__all__ = ["Retriever", "Embedder", "Reranker", "check_documents", "check_topics", "check_runs"]


def check_documents(X) -> list[Document]:
    if isinstance(X, TrainingCorpus):
        X = X.documents
    docs = list(X)
    if not docs:
        raise ValueError("expected at least one document")
    bad = [type(d).__name__ for d in docs if not isinstance(d, Document)]
    if bad:
        raise TypeError(f"expected Document instances, got {bad[0]}")
    return docs


def check_topics(X, config: PipelineConfig | None = None) -> list[Topic]:
    """Accept Topic objects or ``(topic_id, title)`` pairs."""
    out = []
    for t in X:
        if isinstance(t, Topic):
            out.append(t)
        elif isinstance(t, tuple) and len(t) == 2:
            out.append(Topic.from_title(int(t[0]), str(t[1]), config))
        else:
            raise TypeError(f"cannot interpret {t!r} as a topic")
    return out


def check_runs(X) -> list[RankedList]:
    if isinstance(X, RankedList):
        return [X]
    runs = list(X)
    for r in runs:
        if not isinstance(r, RankedList):
            raise TypeError(f"expected RankedList instances, got {type(r).__name__}")
    return runs


class Retriever(BaseEstimator):
    """First-stage ranking with BM25 or Dirichlet QLM, optionally with feedback.

    ``fit`` takes documents (or a prebuilt Index); ``predict`` takes topics
    and returns one RankedList per topic.
    """

    def __init__(self, model="bm25", prf="none", depth=1000, k1=1.2, k3=1000.0, b=0.75, mu=1000.0,
                 fb_docs=10, fb_terms=None, beta=0.4, alpha=0.5):
        self.model = model
        self.prf = prf
        self.depth = depth
        self.k1 = k1
        self.k3 = k3
        self.b = b
        self.mu = mu
        self.fb_docs = fb_docs
        self.fb_terms = fb_terms
        self.beta = beta
        self.alpha = alpha

    def _check_params(self):
        allowed = {"bm25": ("none", "rocchio"), "qlm": ("none", "rm3")}
        if self.model not in allowed:
            raise ValueError(f"model must be 'bm25' or 'qlm', got {self.model!r}")
        if self.prf not in allowed[self.model]:
            raise ValueError(f"prf={self.prf!r} is not available for model={self.model!r}")
        if int(self.depth) < 1:
            raise ValueError("depth must be >= 1")

    def fit(self, X, y=None):
        self._check_params()
        self.index_ = X if isinstance(X, Index) else build_index(check_documents(X))
        return self

    def predict(self, X) -> list[RankedList]:
        check_is_fitted(self, "index_")
        self._check_params()
        topics = check_topics(X, self.index_.pipeline)
        depth = int(self.depth)
        if self.model == "bm25":
            bm25 = BM25Params(self.k1, self.k3, self.b)
            if self.prf == "rocchio":
                fb = RocchioParams(self.fb_docs, 10 if self.fb_terms is None else self.fb_terms, self.beta)
                return [rank_bm25_rocchio(self.index_, t, depth, bm25, fb) for t in topics]
            return [rank_bm25(self.index_, t, depth, bm25) for t in topics]
        qlm = QLMParams(self.mu)
        if self.prf == "rm3":
            fb = RM3Params(self.fb_docs, 50 if self.fb_terms is None else self.fb_terms, self.alpha)
            return [rank_qlm_rm3(self.index_, t, depth, qlm, fb) for t in topics]
        return [rank_qlm(self.index_, t, depth, qlm) for t in topics]


class Embedder(BaseEstimator, TransformerMixin):
    """Train embeddings on a document set.

    ``doc_vec='pv'`` co-trains document vectors; ``'add'`` trains word
    vectors only and builds document vectors by tf-idf weighted addition.
    ``transform`` maps documents to unit-length-free raw vectors.
    """

    def __init__(self, doc_vec="pv", dim=300, window=10, negatives=5, epochs=5, initial_lr=0.025,
                 min_count=5, seed=1, threads=1, verbose=False):
        self.doc_vec = doc_vec
        self.dim = dim
        self.window = window
        self.negatives = negatives
        self.epochs = epochs
        self.initial_lr = initial_lr
        self.min_count = min_count
        self.seed = seed
        self.threads = threads
        self.verbose = verbose

    def _params(self) -> EmbeddingParams:
        return EmbeddingParams(dim=self.dim, window=self.window, negatives=self.negatives, epochs=self.epochs,
                               initial_lr=self.initial_lr, min_count=self.min_count, seed=self.seed,
                               threads=self.threads)

    def fit(self, X, y=None):
        if self.doc_vec not in ("pv", "add"):
            raise ValueError(f"doc_vec must be 'pv' or 'add', got {self.doc_vec!r}")
        corpus = X if isinstance(X, TrainingCorpus) else TrainingCorpus(check_documents(X))
        train = train_paragraph_vectors if self.doc_vec == "pv" else train_skipgram
        self.vectors_ = train(corpus, self._params(), verbose=self.verbose)
        if self.doc_vec == "add":
            self.index_ = build_index(corpus.documents)
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "vectors_")
        ids = [d.doc_id if isinstance(d, Document) else str(d) for d in X]
        if self.doc_vec == "pv":
            missing = [d for d in ids if d not in self.vectors_.doc_index]
            if missing:
                raise MissingVectorError(missing)
            return np.array([self.vectors_.doc_matrix[self.vectors_.doc_index[d]] for d in ids]).reshape(-1, self.dim)
        missing = [d for d in ids if d not in self.index_.doc_ordinals]
        if missing:
            raise MissingVectorError(missing)
        return term_addition_matrix(self.index_, self.vectors_, ids)[0]


class Reranker(BaseEstimator):
    """Semantic re-ranking of baseline runs.

    ``fit`` binds the vectors (plus the index for the ``add`` and ``tfidf``
    backends, and topics for ``mode='d2q'``); ``predict`` re-orders runs.
    """

    def __init__(self, lam=0.35, k=10, mode="d2d", doc_vec="pv", allow_missing=False):
        self.lam = lam
        self.k = k
        self.mode = mode
        self.doc_vec = doc_vec
        self.allow_missing = allow_missing

    def fit(self, vectors, index: Index | None = None, topics: Sequence | None = None):
        self.params_ = RerankParams(float(self.lam), int(self.k), self.doc_vec)
        if self.mode not in ("d2d", "d2q"):
            raise ValueError(f"mode must be 'd2d' or 'd2q', got {self.mode!r}")
        if self.params_.doc_vector_backend != "pv" and index is None:
            raise ValueError(f"doc_vec={self.doc_vec!r} needs an index")
        if self.mode == "d2q" and topics is None:
            raise ValueError("mode='d2q' needs topics")
        self.vectors_ = vectors
        self.index_ = index
        config = index.pipeline if index is not None else None
        self.topics_ = {t.topic_id: t for t in check_topics(topics or (), config)}
        return self

    def predict(self, X) -> list[RankedList]:
        check_is_fitted(self, "params_")
        out = []
        for rl in check_runs(X):
            topic = self.topics_.get(rl.topic_id)
            if self.mode == "d2q" and topic is None:
                raise ValueError(f"no topic text for topic {rl.topic_id}")
            out.append(rerank(rl, self.vectors_, self.params_, self.mode, topic=topic, index=self.index_,
                              allow_missing=self.allow_missing))
        return out
