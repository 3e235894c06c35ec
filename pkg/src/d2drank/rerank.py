"""Semantic re-ranking against a pseudo-feedback set (D2D) or the query (D2Q).

The final score of a candidate is ``lam * R + (1 - lam) * S`` where the
baseline scores R and the semantic scores S are each min-max normalised
over the candidate list. In D2D mode S is the feedback-weighted sum of
``cos(d, d_i) + 1`` over the top-k documents; in D2Q mode it is the
cosine to the summed query-term vectors, shifted to [0, 1].
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .corpus_io import Topic
from .embedding import VectorStore, term_addition_matrix, tfidf_matrix
from .exceptions import MissingVectorError
from .index import Index
from .runs import RankedList

__all__ = [
    "FeedbackSet",
    "RerankParams",
    "minmax_normalize",
    "build_feedback_set",
    "sem_score",
    "sem_scores",
    "query_vector",
    "d2q_score",
    "candidate_vectors",
    "rerank",
]

log = logging.getLogger(__name__)

BACKENDS = ("pv", "add", "tfidf_sparse")
MODES = ("d2d", "d2q")
_BACKEND_ALIASES = {"tfidf": "tfidf_sparse"}


@dataclass(frozen=True)
class RerankParams:
    lam: float = 0.35
    k: int = 10
    doc_vector_backend: str = "pv"

    def __post_init__(self):
        if not 0 <= self.lam <= 1:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        backend = _BACKEND_ALIASES.get(self.doc_vector_backend, self.doc_vector_backend)
        if backend not in BACKENDS:
            raise ValueError(f"unknown document vector backend {self.doc_vector_backend!r}")
        object.__setattr__(self, "doc_vector_backend", backend)


@dataclass(frozen=True)
class FeedbackSet:
    topic_id: int
    doc_ids: tuple[str, ...]
    scores: np.ndarray
    weights: np.ndarray


def minmax_normalize(scores) -> np.ndarray:
    """Affine map onto [0, 1]; constant input maps to all zeros."""
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise ValueError("cannot min-max normalise an empty score list")
    lo, hi = s.min(), s.max()
    if hi == lo:
        return np.zeros_like(s)
    return (s - lo) / (hi - lo)


def build_feedback_set(ranked: RankedList, k: int) -> FeedbackSet:
    """Top-k documents weighted by their min-max normalised baseline score.

    Normalisation runs over the full list; weights are then L1-normalised
    over the members, falling back to uniform when they are all zero.
    """
    if len(ranked) == 0:
        raise ValueError(f"topic {ranked.topic_id}: cannot build a feedback set from an empty ranking")
    m = min(k, len(ranked))
    w = minmax_normalize(ranked.scores)[:m]
    total = w.sum()
    w = w / total if total > 0 else np.full(m, 1.0 / m)
    return FeedbackSet(ranked.topic_id, ranked.doc_ids[:m], ranked.scores[:m].copy(), w)


def sem_score(doc_vec, feedback_matrix, w) -> float:
    """w^T (D^T d + 1) with the feedback vectors as the columns of D."""
    d = np.asarray(doc_vec, dtype=np.float64)
    D = np.asarray(feedback_matrix, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if D.ndim == 1:
        D = D[:, None]
    if D.shape[0] != d.shape[0] or D.shape[1] != w.shape[0]:
        raise ValueError(f"shape mismatch: d {d.shape}, D {D.shape}, w {w.shape}")
    return float(w @ (D.T @ d + 1.0))


def sem_scores(doc_matrix, feedback_matrix, w) -> np.ndarray:
    """:func:`sem_score` for every row of ``doc_matrix`` (dense or sparse)."""
    sims = doc_matrix @ feedback_matrix
    if sp.issparse(sims):
        sims = sims.toarray()
    return (np.asarray(sims) + 1.0) @ np.asarray(w, dtype=np.float64)


def query_vector(topic: Topic, word_vectors, return_flag: bool = False):
    """Unit-normalised sum of query-term vectors, counting repeated terms."""
    lookup = word_vectors.word_vectors if isinstance(word_vectors, VectorStore) else word_vectors
    if not lookup:
        raise ValueError("word_vectors is empty")
    dim = len(next(iter(lookup.values())))
    q = np.zeros(dim)
    for term, qtf in topic.qtf.items():
        vec = lookup.get(term)
        if vec is not None:
            q += qtf * np.asarray(vec, dtype=np.float64)
    norm = np.linalg.norm(q)
    zero = norm == 0
    if not zero:
        q = q / norm
    return (q, zero) if return_flag else q


def d2q_score(doc_vec, query_vec) -> float:
    return float(np.dot(doc_vec, query_vec))


def _unit_rows(X):
    if sp.issparse(X):
        norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
        inv = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
        return sp.csr_matrix(sp.diags(inv) @ X), norms == 0
    norms = np.linalg.norm(X, axis=1)
    inv = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
    return X * inv[:, None], norms == 0


def candidate_vectors(doc_ids: Sequence[str], vectors: VectorStore | None, backend: str,
                      index: Index | None = None, allow_missing: bool = False):
    """Unit document vectors for ``doc_ids`` under ``backend``.

    Returns ``(matrix, zero_mask)``; the matrix is sparse for the tf-idf
    backend. Zero vectors stay zero so they score cosine 0 everywhere.
    """
    backend = _BACKEND_ALIASES.get(backend, backend)
    if backend == "pv":
        missing = [d for d in doc_ids if d not in vectors.doc_index]
        if missing and not allow_missing:
            raise MissingVectorError(missing)
        X = np.zeros((len(doc_ids), vectors.dim))
        for i, d in enumerate(doc_ids):
            j = vectors.doc_index.get(d)
            if j is not None:
                X[i] = vectors.doc_matrix[j]
    elif backend in ("add", "tfidf_sparse"):
        if index is None:
            raise ValueError(f"backend {backend!r} needs an index")
        missing = [d for d in doc_ids if d not in index.doc_ordinals]
        if missing:
            if not allow_missing:
                raise MissingVectorError(missing)
            present = [d for d in doc_ids if d in index.doc_ordinals]
        else:
            present = list(doc_ids)
        if backend == "add":
            part, _ = term_addition_matrix(index, vectors, present)
        else:
            part = tfidf_matrix(index, present)
        if missing:
            rows = [i for i, d in enumerate(doc_ids) if d in index.doc_ordinals]
            if sp.issparse(part):
                pick = sp.csr_matrix((np.ones(len(rows)), (rows, np.arange(len(rows)))),
                                     shape=(len(doc_ids), len(rows)))
                X = sp.csr_matrix(pick @ part)
            else:
                X = np.zeros((len(doc_ids), part.shape[1]))
                X[rows] = part
        else:
            X = part
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return _unit_rows(X)


def semantic_component(ranked: RankedList, U, k: int, mode: str = "d2d", qvec=None) -> np.ndarray:
    """Raw semantic score of every candidate (before min-max)."""
    if mode == "d2d":
        fb = build_feedback_set(ranked, k)
        D = U[: len(fb.doc_ids)].T
        return sem_scores(U, D, fb.weights)
    if mode == "d2q":
        if qvec is None:
            raise ValueError("d2q mode needs a query vector")
        sims = U @ qvec
        return (np.asarray(sims).ravel() + 1.0) / 2.0
    raise ValueError(f"unknown mode {mode!r}")


def combine(ranked: RankedList, r_hat: np.ndarray, s_hat: np.ndarray, lam: float, tag: str) -> RankedList:
    """Interpolate and re-sort; ties keep their input order."""
    final = lam * r_hat + (1.0 - lam) * s_hat
    return RankedList.from_scores(ranked.topic_id, ranked.doc_ids, final, tag)


def rerank_tag(base: str, mode: str, backend: str) -> str:
    short = {"pv": "dpv", "add": "dadd", "tfidf_sparse": "dtfidf"}[backend]
    return f"{base or 'run'}+{'sem' if mode == 'd2d' else 'simdq'}_{short}"


def rerank(ranked: RankedList, vectors: VectorStore | None, params: RerankParams = RerankParams(),
           mode: str = "d2d", *, topic: Topic | None = None, index: Index | None = None,
           allow_missing: bool = False) -> RankedList:
    """Re-order ``ranked`` by interpolating its scores with semantic similarity.

    ``topic`` is required in d2q mode; ``index`` for the ``add`` and
    ``tfidf_sparse`` backends. The candidate set never changes.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    tag = rerank_tag(ranked.tag, mode, params.doc_vector_backend)
    if len(ranked) == 0:
        return RankedList(ranked.topic_id, (), [], tag, set(ranked.flags))
    U, zero = candidate_vectors(ranked.doc_ids, vectors, params.doc_vector_backend, index, allow_missing)
    qvec = None
    if mode == "d2q":
        if topic is None:
            raise ValueError("d2q mode needs the topic")
        if params.doc_vector_backend == "tfidf_sparse":
            raise ValueError("d2q mode needs dense document vectors (pv or add)")
        qvec, qzero = query_vector(topic, vectors, return_flag=True)
        if qzero:
            log.warning("topic %s: no query term has a vector", ranked.topic_id)
    s = semantic_component(ranked, U, params.k, mode, qvec)
    out = combine(ranked, minmax_normalize(ranked.scores), minmax_normalize(s), params.lam, tag)
    out.flags = set(ranked.flags)
    if zero.any():
        out.flags |= {f"zero_vector:{ranked.doc_ids[i]}" for i in np.flatnonzero(zero)}
    if mode == "d2q" and qzero:
        out.flags.add("zero_query_vector")
    return out
