import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import kendalltau

from d2drank.corpus_io import Document, PipelineConfig, Topic
from d2drank.embedding import VectorStore, doc_vector_term_addition, doc_vector_tfidf_sparse, sparse_cosine
from d2drank.exceptions import MissingVectorError
from d2drank.index import build_index
from d2drank.rerank import (
    RerankParams,
    build_feedback_set,
    combine,
    d2q_score,
    minmax_normalize,
    query_vector,
    rerank,
    sem_score,
    sem_scores,
)
from d2drank.runs import RankedList
from oracles import sem_loop

RAW = PipelineConfig(stemmer="none", stopwords=frozenset())


def unit(v):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def test_minmax_examples():
    assert np.allclose(minmax_normalize([2, 4, 6]), [0, 0.5, 1])
    assert np.array_equal(minmax_normalize([5, 5, 5]), [0, 0, 0])
    assert np.allclose(minmax_normalize([-1, 1]), [0, 1])
    with pytest.raises(ValueError):
        minmax_normalize([])


def test_feedback_weights():
    rl = RankedList(1, ["a", "b", "c"], [4, 2, 0])
    fb = build_feedback_set(rl, 2)
    assert fb.doc_ids == ("a", "b")
    assert np.allclose(fb.weights, [2 / 3, 1 / 3])
    assert np.allclose(build_feedback_set(rl, 1).weights, [1.0])
    assert np.allclose(build_feedback_set(RankedList(1, ["a", "b"], [3, 3]), 2).weights, [0.5, 0.5])
    # list length equals k: the last member maps to 0 but others carry weight
    assert np.allclose(build_feedback_set(rl, 3).weights, [2 / 3, 1 / 3, 0])
    assert len(build_feedback_set(rl, 10).doc_ids) == 3
    with pytest.raises(ValueError):
        build_feedback_set(RankedList(1, [], []), 3)


def test_params_validation_and_alias():
    assert RerankParams(doc_vector_backend="tfidf").doc_vector_backend == "tfidf_sparse"
    for bad in ({"lam": 1.5}, {"k": 0}, {"doc_vector_backend": "lda"}):
        with pytest.raises(ValueError):
            RerankParams(**bad)


def test_sem_examples():
    e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    assert sem_score(e1, e1[:, None], [1.0]) == 2.0
    assert sem_score(e1, e2[:, None], [1.0]) == 1.0
    D = np.column_stack([e1, -e1])
    assert sem_score(e1, D, [0.5, 0.5]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        sem_score(np.ones(3), D, [0.5, 0.5])


def random_instance(rng, k_max=50, dim_max=64):
    k = int(rng.integers(1, k_max + 1))
    dim = int(rng.integers(1, dim_max + 1))
    D = rng.normal(size=(dim, k))
    D /= np.linalg.norm(D, axis=0)
    d = unit(rng.normal(size=dim))
    w = rng.random(k)
    return d, D, w / w.sum()


def test_sem_matrix_equals_loop():
    rng = np.random.default_rng(0)
    for _ in range(200):
        d, D, w = random_instance(rng)
        s = sem_score(d, D, w)
        assert s == pytest.approx(sem_loop(d, D.T, w), abs=1e-9)
        assert 0.0 <= s <= 2.0 + 1e-12
        assert sem_scores(d[None, :], D, w)[0] == pytest.approx(s, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
def test_sem_monotone_in_each_cosine(seed, shift):
    # raise cos(d, d_0) by rotating d_0 toward d; the score must not drop
    rng = np.random.default_rng(seed)
    d, D, w = random_instance(rng, k_max=6, dim_max=6)
    before = sem_score(d, D, w)
    D2 = D.copy()
    D2[:, 0] = unit(D[:, 0] + shift * d) if np.linalg.norm(D[:, 0] + shift * d) > 1e-9 else d
    assert sem_score(d, D2, w) >= before - 1e-12


def test_query_vector_examples():
    vecs = {"a": np.array([2.0, 0.0]), "b": np.array([0.0, 2.0])}
    assert np.allclose(query_vector(Topic(1, "a", ("a",), {"a": 1}), vecs), [1, 0])
    q = query_vector(Topic(1, "a b", ("a", "b"), {"a": 1, "b": 1}), vecs)
    assert np.allclose(q, [np.sqrt(0.5), np.sqrt(0.5)])
    q, zero = query_vector(Topic(1, "z", ("z",), {"z": 1}), vecs, return_flag=True)
    assert zero and not q.any()
    # qtf multiplicity counts
    q = query_vector(Topic(1, "a a b", ("a", "b"), {"a": 2, "b": 1}), vecs)
    assert np.allclose(q, unit([2, 1]))


def test_d2q_examples():
    assert d2q_score([0.6, 0.8], [1, 0]) == pytest.approx(0.6)
    assert d2q_score([1, 0], [1, 0]) == 1.0
    assert d2q_score([1, 0], [0, 1]) == 0.0


def store_for(doc_vecs, words=None):
    ids = list(doc_vecs)
    words = words or {}
    dim = len(next(iter(doc_vecs.values())))
    W = np.array([words[w] for w in words]).reshape(len(words), dim)
    return VectorStore(list(words), W, ids, np.array([doc_vecs[d] for d in ids]))


def test_hand_built_interpolation():
    # R = [3, 2, 1] -> R_hat = [1, 0.5, 0]; k=1 so SEM is cos to "a" plus 1
    vecs = {"a": [1.0, 0.0], "b": [-1.0, 0.0], "c": [0.6, 0.8]}
    rl = RankedList(1, ["a", "b", "c"], [3, 2, 1], "bm25")
    out = rerank(rl, store_for(vecs), RerankParams(lam=0.35, k=1))
    sem = np.array([2.0, 0.0, 1.6])
    s_hat = sem / 2.0
    final = 0.35 * np.array([1, 0.5, 0]) + 0.65 * s_hat
    expected = dict(zip("abc", final))
    assert out.doc_ids == ("a", "c", "b")
    for doc, score in zip(out.doc_ids, out.scores):
        assert score == pytest.approx(expected[doc], abs=1e-12)
    assert out.tag == "bm25+sem_dpv"


def test_lambda_one_keeps_order_and_lambda_zero_follows_top_document():
    rng = np.random.default_rng(4)
    ids = [f"d{i}" for i in range(30)]
    vecs = {d: rng.normal(size=5) for d in ids}
    rl = RankedList(1, ids, np.sort(rng.random(30))[::-1])
    same = rerank(rl, store_for(vecs), RerankParams(lam=1.0, k=5))
    assert same.doc_ids == rl.doc_ids
    assert kendalltau(range(30), [rl.doc_ids.index(d) for d in same.doc_ids]).statistic == 1.0
    by_top = rerank(rl, store_for(vecs), RerankParams(lam=0.0, k=1))
    cosines = {d: unit(vecs[d]) @ unit(vecs["d0"]) for d in ids}
    assert by_top.doc_ids == tuple(sorted(ids, key=lambda d: -cosines[d]))


def test_rerank_is_a_permutation_and_affine_in_lambda():
    rng = np.random.default_rng(5)
    ids = [f"d{i}" for i in range(20)]
    vecs = store_for({d: rng.normal(size=4) for d in ids})
    rl = RankedList(1, ids, np.sort(rng.random(20))[::-1])
    runs = {lam: rerank(rl, vecs, RerankParams(lam=lam, k=3)) for lam in (0.0, 0.5, 1.0)}
    for out in runs.values():
        assert sorted(out.doc_ids) == sorted(ids)
    score = {lam: dict(zip(o.doc_ids, o.scores)) for lam, o in runs.items()}
    for d in ids:
        assert score[0.5][d] == pytest.approx((score[0.0][d] + score[1.0][d]) / 2, abs=1e-12)


def test_ties_keep_input_order():
    rl = RankedList(1, ["x", "y", "z"], [1, 1, 1])
    vecs = store_for({"x": [1.0, 0], "y": [1.0, 0], "z": [1.0, 0]})
    assert rerank(rl, vecs, RerankParams(lam=0.5, k=2)).doc_ids == ("x", "y", "z")


def test_missing_vectors():
    rl = RankedList(1, ["a", "ghost"], [2, 1])
    vecs = store_for({"a": [1.0, 0.0]})
    with pytest.raises(MissingVectorError, match="ghost"):
        rerank(rl, vecs)
    out = rerank(rl, vecs, RerankParams(lam=0.0, k=1), allow_missing=True)
    assert "zero_vector:ghost" in out.flags
    assert set(out.doc_ids) == {"a", "ghost"}


def test_zero_vector_document_scores_cosine_zero():
    rl = RankedList(1, ["a", "b", "z"], [3, 2, 1])
    vecs = store_for({"a": [1.0, 0.0], "b": [-1.0, 0.0], "z": [0.0, 0.0]})
    out = rerank(rl, vecs, RerankParams(lam=0.0, k=1))
    # SEM: a=2, z=1, b=0
    assert out.doc_ids == ("a", "z", "b")
    assert "zero_vector:z" in out.flags


def test_empty_ranking():
    out = rerank(RankedList(1, [], []), store_for({"a": [1.0]}))
    assert len(out) == 0


def test_d2q_mode_orders_by_query_cosine():
    words = {"w1": np.array([1.0, 0.0]), "w2": np.array([0.0, 1.0])}
    vecs = store_for({"a": [0.0, 1.0], "b": [1.0, 0.1], "c": [1.0, 1.0]}, words)
    rl = RankedList(7, ["a", "b", "c"], [3, 2, 1], "bm25")
    t = Topic(7, "w1", ("w1",), {"w1": 1})
    out = rerank(rl, vecs, RerankParams(lam=0.0), "d2q", topic=t)
    assert out.doc_ids == ("b", "c", "a")
    assert out.tag == "bm25+simdq_dpv"
    with pytest.raises(ValueError):
        rerank(rl, vecs, RerankParams(), "d2q")
    with pytest.raises(ValueError):
        rerank(rl, vecs, RerankParams(), "d3q")


def test_add_and_tfidf_backends_match_direct_computation():
    docs = [Document("d0", "a b b"), Document("d1", "b c"), Document("d2", "a c c"), Document("d3", "d")]
    idx = build_index(docs, RAW)
    rng = np.random.default_rng(0)
    words = {t: rng.normal(size=3) for t in "abcd"}
    store = VectorStore(list(words), np.array(list(words.values())))
    rl = RankedList(1, ["d0", "d1", "d2", "d3"], [4, 3, 2, 1])

    add = rerank(rl, store, RerankParams(lam=0.0, k=1, doc_vector_backend="add"), index=idx)
    direct = {d: unit(doc_vector_term_addition(d, words, idx)) for d in rl.doc_ids}
    assert not direct["d1"].any()  # idf(b) = idf(c) = 0, so d1 has a zero vector
    assert add.doc_ids == tuple(sorted(rl.doc_ids, key=lambda d: -(direct[d] @ direct["d0"])))

    tf = rerank(rl, None, RerankParams(lam=0.0, k=1, doc_vector_backend="tfidf_sparse"), index=idx)
    sparse = {d: doc_vector_tfidf_sparse(d, idx) for d in rl.doc_ids}
    cos = {d: sparse_cosine(sparse[d], sparse["d0"]) for d in rl.doc_ids}
    assert tf.doc_ids == tuple(sorted(rl.doc_ids, key=lambda d: -cos[d]))
    with pytest.raises(ValueError):
        rerank(rl, store, RerankParams(doc_vector_backend="add"))


def test_combine_direct():
    rl = RankedList(1, ["a", "b"], [1, 0])
    out = combine(rl, np.array([1.0, 0.0]), np.array([0.0, 1.0]), 0.4, "t")
    assert out.doc_ids == ("b", "a")
    assert np.allclose(out.scores, [0.6, 0.4])
