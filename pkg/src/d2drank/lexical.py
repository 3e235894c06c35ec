"""Baseline relevance scores: BM25, Dirichlet query likelihood, Rocchio and RM3 feedback."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .corpus_io import Topic
from .index import Index
from .runs import RankedList

__all__ = [
    "BM25Params",
    "QLMParams",
    "RocchioParams",
    "RM3Params",
    "idf",
    "tfidf_weight",
    "bm25_score",
    "rank_bm25",
    "qlm_score",
    "rank_qlm",
    "rocchio_expand",
    "rank_bm25_rocchio",
    "ml_query_model",
    "rm3_expand",
    "rank_query_model",
    "rank_qlm_rm3",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BM25Params:
    k1: float = 1.2
    k3: float = 1000.0
    b: float = 0.75

    def __post_init__(self):
        if not self.k1 > 0:
            raise ValueError(f"k1 must be > 0, got {self.k1}")
        if not self.k3 >= 0:
            raise ValueError(f"k3 must be >= 0, got {self.k3}")
        if not 0 <= self.b <= 1:
            raise ValueError(f"b must lie in [0, 1], got {self.b}")


@dataclass(frozen=True)
class QLMParams:
    mu: float = 1000.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be > 0, got {self.mu}")


@dataclass(frozen=True)
class RocchioParams:
    fb_docs: int = 10
    fb_terms: int = 10
    beta: float = 0.4

    def __post_init__(self):
        if self.fb_docs < 1 or self.fb_terms < 1:
            raise ValueError("fb_docs and fb_terms must be >= 1")
        if not self.beta >= 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")


@dataclass(frozen=True)
class RM3Params:
    fb_docs: int = 10
    fb_terms: int = 50
    alpha: float = 0.5

    def __post_init__(self):
        if self.fb_docs < 1 or self.fb_terms < 1:
            raise ValueError("fb_docs and fb_terms must be >= 1")
        if not 0 <= self.alpha <= 1:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


def idf(N, df):
    """Robertson-Sparck Jones weight in base 2; negative when df > N/2."""
    if isinstance(df, np.ndarray):
        return np.log2((N - df + 0.5) / (df + 0.5))
    return math.log2((N - df + 0.5) / (df + 0.5))


def tfidf_weight(tf, df, N):
    return tf * idf(N, df)


def _qtf_factor(qtf: float, k3: float) -> float:
    return (k3 + 1.0) * qtf / (k3 + qtf)


def _bm25_query_weights(topic: Topic, params: BM25Params) -> dict[str, float]:
    if topic.weights is not None:
        return {t: float(w) for t, w in topic.weights.items() if w != 0}
    return {t: _qtf_factor(q, params.k3) for t, q in topic.qtf.items()}


def bm25_score(index: Index, doc, topic: Topic, params: BM25Params = BM25Params()) -> float:
    """BM25 score of one document; ``doc`` is a doc_id or ordinal."""
    ordinal = index.ordinal(doc)
    length = index.doc_lengths[ordinal]
    K = params.k1 * ((1 - params.b) + params.b * length / index.stats.avg_l)
    score = 0.0
    for term, qw in _bm25_query_weights(topic, params).items():
        ords, tfs = index.postings(term)
        pos = np.searchsorted(ords, ordinal)
        if pos == len(ords) or ords[pos] != ordinal:
            continue
        tf = float(tfs[pos])
        w = idf(index.N, len(ords))
        score += qw * w * ((params.k1 + 1) * tf / (K + tf))
    return score


def rank_bm25(index: Index, topic: Topic, depth: int = 1000, params: BM25Params = BM25Params(),
              tag: str = "bm25") -> RankedList:
    """Rank every document containing a query term; ties go to the lower ordinal."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if not index.usable:
        raise ValueError("cannot score against an empty index")
    weights = _bm25_query_weights(topic, params)
    scores = np.zeros(index.N)
    matched = np.zeros(index.N, dtype=bool)
    K = params.k1 * ((1 - params.b) + params.b * index.doc_lengths / index.stats.avg_l)
    flags = set()
    for term, qw in weights.items():
        ords, tfs = index.postings(term)
        if len(ords) == 0:
            log.warning("topic %s: query term %r not in index, skipped", topic.topic_id, term)
            flags.add(f"oov:{term}")
            continue
        w = idf(index.N, len(ords))
        tf = tfs.astype(np.float64)
        scores[ords] += qw * w * ((params.k1 + 1) * tf / (K[ords] + tf))
        matched[ords] = True
    if not weights:
        log.warning("topic %s: empty query", topic.topic_id)
        flags.add("empty_query")
    cand = np.flatnonzero(matched)
    rl = RankedList.from_scores(topic.topic_id, [index.doc_ids[i] for i in cand], scores[cand],
                                tag, order_keys=cand, depth=depth)
    rl.flags |= flags
    return rl


def qlm_score(index: Index, doc, topic: Topic, params: QLMParams = QLMParams()) -> float:
    """Log query likelihood under Dirichlet smoothing, natural log.

    Query terms that never occur in the collection are skipped.
    """
    ordinal = index.ordinal(doc)
    length = float(index.doc_lengths[ordinal])
    mu = params.mu
    alpha_d = mu / (length + mu)
    score = 0.0
    qlen = 0
    for term, qtf in topic.qtf.items():
        ctf = index.collection_frequency(term)
        if ctf == 0:
            log.warning("topic %s: query term %r has zero collection frequency, skipped",
                        topic.topic_id, term)
            continue
        p_c = ctf / index.stats.total_tokens
        ords, tfs = index.postings(term)
        pos = np.searchsorted(ords, ordinal)
        tf = float(tfs[pos]) if pos < len(ords) and ords[pos] == ordinal else 0.0
        p_d = (tf + mu * p_c) / (length + mu)
        score += qtf * math.log(p_d / (alpha_d * p_c))
        qlen += qtf
    return score + qlen * math.log(alpha_d)


def ml_query_model(index: Index, topic: Topic) -> dict[str, float]:
    """Maximum-likelihood query model over the in-vocabulary query terms."""
    kept = {t: q for t, q in topic.qtf.items() if index.collection_frequency(t) > 0}
    total = sum(kept.values())
    return {t: q / total for t, q in kept.items()} if total else {}


def rank_query_model(index: Index, model: dict[str, float], topic_id, depth: int = 1000,
                     params: QLMParams = QLMParams(), tag: str = "qlm") -> RankedList:
    """Rank by sum_w p(w|Q) log(p(w|d) / (alpha_d p(w|C))) + log alpha_d.

    For the maximum-likelihood model this is :func:`qlm_score` divided by
    |Q|. For any model it differs from the cross entropy
    sum_w p(w|Q) log p(w|d) by a per-query constant, so it orders documents
    the same way. Only documents containing a term of positive weight are
    ranked.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    mu = params.mu
    lengths = index.doc_lengths.astype(np.float64)
    scores = np.zeros(index.N)
    matched = np.zeros(index.N, dtype=bool)
    flags = set()
    mass = 0.0
    for term, weight in model.items():
        if weight <= 0:
            continue
        ords, tfs = index.postings(term)
        if len(ords) == 0:
            flags.add(f"oov:{term}")
            continue
        p_c = index.collection_frequency(term) / index.stats.total_tokens
        # terms absent from d contribute log(1) = 0
        scores[ords] += weight * np.log1p(tfs / (mu * p_c))
        matched[ords] = True
        mass += weight
    if not model:
        log.warning("topic %s: no in-vocabulary query terms", topic_id)
        flags.add("empty_query")
    cand = np.flatnonzero(matched)
    final = scores[cand] + mass * np.log(mu / (lengths[cand] + mu))
    rl = RankedList.from_scores(topic_id, [index.doc_ids[i] for i in cand], final, tag,
                                order_keys=cand, depth=depth)
    rl.flags |= flags
    return rl


def rank_qlm(index: Index, topic: Topic, depth: int = 1000, params: QLMParams = QLMParams(),
             tag: str = "qlm") -> RankedList:
    return rank_query_model(index, ml_query_model(index, topic), topic.topic_id, depth, params, tag)


def _feedback_ordinals(index: Index, initial: RankedList, fb_docs: int, what: str) -> np.ndarray:
    if len(initial) == 0:
        raise ValueError(f"{what} needs a nonempty initial ranking")
    if len(initial) < fb_docs:
        log.warning("topic %s: only %d feedback documents available (asked for %d)",
                    initial.topic_id, len(initial), fb_docs)
    return np.array([index.ordinal(d) for d in initial.doc_ids[:fb_docs]], dtype=np.int64)


def rocchio_expand(index: Index, topic: Topic, initial: RankedList,
                   params: RocchioParams = RocchioParams(),
                   bm25: BM25Params = BM25Params()) -> Topic:
    """Expand a query with the top tf-idf terms of the feedback documents.

    New weight of term t: qtw(t) + beta * max qtw * s(t)/max s, where s(t)
    sums tf*idf over the feedback documents and only the ``fb_terms``
    best-scoring terms receive the second part. This is the usual
    "qtw/max qtw + beta * s/max s" rescaled by max qtw, so rankings agree
    and beta = 0 leaves the original weights untouched.
    """
    fb = _feedback_ordinals(index, initial, params.fb_docs, "rocchio_expand")
    original = _bm25_query_weights(topic, bm25)
    top_qw = max(original.values(), default=0.0)
    weights = dict(original)
    if params.beta > 0 and top_qw > 0:
        X = index.doc_term_matrix()[fb]
        term_idf = idf(index.N, index.df)
        s = np.asarray(X.sum(axis=0)).ravel() * term_idf
        present = np.flatnonzero(np.asarray((X > 0).sum(axis=0)).ravel())
        # descending score, ties by term id (lexicographic term order)
        order = present[np.lexsort((present, -s[present]))][: params.fb_terms]
        top_s = s[order[0]] if len(order) else 0.0
        if top_s > 0:
            for tid in order:
                term = index.terms[tid]
                weights[term] = weights.get(term, 0.0) + params.beta * top_qw * s[tid] / top_s
        else:
            log.warning("topic %s: no positively weighted expansion terms", topic.topic_id)
    return Topic(topic.topic_id, topic.title, tuple(weights), dict(topic.qtf), weights)


def rank_bm25_rocchio(index: Index, topic: Topic, depth: int = 1000, bm25: BM25Params = BM25Params(),
                      rocchio: RocchioParams = RocchioParams(), tag: str = "bm25_rocchio") -> RankedList:
    initial = rank_bm25(index, topic, max(depth, rocchio.fb_docs), bm25)
    if len(initial) == 0:
        return RankedList(topic.topic_id, (), [], tag, initial.flags)
    return rank_bm25(index, rocchio_expand(index, topic, initial, rocchio, bm25), depth, bm25, tag)


def rm3_expand(index: Index, topic: Topic, initial: RankedList, params: RM3Params = RM3Params(),
               qlm: QLMParams = QLMParams()) -> dict[str, float]:
    """Relevance-model query: alpha * p_ml(w|Q) + (1 - alpha) * p_rm(w).

    p_rm(w) is proportional to sum over feedback documents of
    p(w|d) p(Q|d) with Dirichlet-smoothed document models, kept to the
    ``fb_terms`` most probable terms and renormalised.
    """
    fb = _feedback_ordinals(index, initial, params.fb_docs, "rm3_expand")
    p_ml = ml_query_model(index, topic)
    if params.alpha == 1.0 or not p_ml:
        return dict(p_ml)
    p_rm = _relevance_model(index, topic, fb, params.fb_terms, qlm.mu)
    model = {t: params.alpha * p for t, p in p_ml.items()}
    for t, p in p_rm.items():
        model[t] = model.get(t, 0.0) + (1 - params.alpha) * p
    return model


def _relevance_model(index: Index, topic: Topic, fb: np.ndarray, fb_terms: int, mu: float) -> dict[str, float]:
    p_c = index.ctf / index.stats.total_tokens
    X = index.doc_term_matrix()[fb].toarray()
    lengths = index.doc_lengths[fb].astype(np.float64)[:, None]
    p_wd = (X + mu * p_c[None, :]) / (lengths + mu)
    q_ids = [(index.term_id(t), q) for t, q in topic.qtf.items() if index.collection_frequency(t) > 0]
    loglik = np.zeros(len(fb))
    for tid, q in q_ids:
        loglik += q * np.log(p_wd[:, tid])
    doc_w = np.exp(loglik - loglik.max())
    doc_w /= doc_w.sum()
    rm = doc_w @ p_wd
    order = np.lexsort((np.arange(len(rm)), -rm))[:fb_terms]
    kept = rm[order]
    kept = kept / kept.sum()
    return {index.terms[i]: float(p) for i, p in zip(order, kept)}


def rank_qlm_rm3(index: Index, topic: Topic, depth: int = 1000, qlm: QLMParams = QLMParams(),
                 rm3: RM3Params = RM3Params(), tag: str = "qlm_rm3") -> RankedList:
    initial = rank_qlm(index, topic, max(depth, rm3.fb_docs), qlm)
    if len(initial) == 0:
        return RankedList(topic.topic_id, (), [], tag, initial.flags)
    model = rm3_expand(index, topic, initial, rm3, qlm)
    return rank_query_model(index, model, topic.topic_id, depth, qlm, tag)

