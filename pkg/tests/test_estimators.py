import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from d2drank import Embedder, Reranker, Retriever
from d2drank.corpus_io import Document, Topic
from d2drank.index import build_index
from d2drank.lexical import BM25Params, rank_bm25
from d2drank.rerank import RerankParams, rerank
from d2drank.synthetic import make_collection

DOCS = [Document("d0", "red wine tasting"), Document("d1", "white wine cellar"),
        Document("d2", "red grape harvest"), Document("d3", "stock market news")]


def test_params_round_trip():
    r = Retriever(model="qlm", prf="rm3", mu=500.0)
    assert r.get_params()["mu"] == 500.0
    r2 = clone(r).set_params(alpha=0.8)
    assert r2.alpha == 0.8 and r.alpha == 0.5
    assert Embedder(dim=16).get_params()["dim"] == 16
    assert clone(Reranker(lam=0.2)).lam == 0.2


def test_retriever_matches_function_api():
    ret = Retriever(depth=10).fit(DOCS)
    out = ret.predict([(1, "red wine")])
    topic = Topic.from_title(1, "red wine", ret.index_.pipeline)
    ref = rank_bm25(build_index(DOCS), topic, 10, BM25Params())
    assert out[0].doc_ids == ref.doc_ids
    assert np.array_equal(out[0].scores, ref.scores)
    for model, prf in (("bm25", "rocchio"), ("qlm", "none"), ("qlm", "rm3")):
        res = Retriever(model=model, prf=prf, fb_docs=2).fit(ret.index_).predict([(1, "red wine")])
        assert res[0].doc_ids


def test_retriever_validation():
    with pytest.raises(NotFittedError):
        Retriever().predict([(1, "x")])
    with pytest.raises(ValueError):
        Retriever(model="bm25", prf="rm3").fit(DOCS)
    with pytest.raises(ValueError):
        Retriever().fit([])
    with pytest.raises(TypeError):
        Retriever().fit(["raw text"])
    with pytest.raises(TypeError):
        Retriever().fit(DOCS).predict(["no id"])


def test_embedder_and_reranker_pipeline():
    coll = make_collection(seed=0, n_pairs=2, docs_per_topic=10, n_noise=10)
    ret = Retriever(depth=30).fit(coll.documents)
    runs = ret.predict(coll.titles)
    emb = Embedder(dim=8, epochs=1, min_count=1, seed=2).fit(coll.documents)
    X = emb.transform(runs[0].doc_ids[:5])
    assert X.shape == (5, 8)
    rr = Reranker(lam=0.5, k=3).fit(emb.vectors_)
    out = rr.predict(runs)
    ref = [rerank(rl, emb.vectors_, RerankParams(0.5, 3)) for rl in runs]
    assert [r.doc_ids for r in out] == [r.doc_ids for r in ref]

    add = Embedder(doc_vec="add", dim=8, epochs=1, min_count=1).fit(coll.documents)
    assert add.transform(coll.documents[:3]).shape == (3, 8)
    d2q = Reranker(mode="d2q", doc_vec="add").fit(add.vectors_, add.index_, coll.titles)
    assert len(d2q.predict(runs[0])) == 1


def test_embedder_and_reranker_validation():
    with pytest.raises(ValueError):
        Embedder(doc_vec="tfidf").fit(DOCS)
    with pytest.raises(NotFittedError):
        Embedder().transform(["d0"])
    emb = Embedder(dim=4, epochs=1, min_count=1).fit(DOCS)
    with pytest.raises(KeyError):
        emb.transform(["ghost"])
    with pytest.raises(ValueError):
        Reranker(doc_vec="add").fit(emb.vectors_)
    with pytest.raises(ValueError):
        Reranker(mode="d2q").fit(emb.vectors_)
    with pytest.raises(ValueError):
        Reranker(lam=2.0).fit(emb.vectors_)
    with pytest.raises(NotFittedError):
        Reranker().predict([])
