import math

import numpy as np
import pytest

from d2drank._sgns import sgd_pair
from d2drank.corpus_io import Document, PipelineConfig
from d2drank.embedding import (
    EmbeddingParams,
    TrainingCorpus,
    VectorStore,
    build_training_corpus,
    doc_vector_term_addition,
    doc_vector_tfidf_sparse,
    load_vectors,
    normalize_unit,
    save_vectors,
    sgns_pair_objective,
    sparse_cosine,
    term_addition_matrix,
    train_paragraph_vectors,
    train_skipgram,
)
from d2drank.exceptions import D2DError, ParseError
from d2drank.index import build_index
from d2drank.lexical import tfidf_weight
from d2drank.runs import RankedList
from oracles import fd_gradients, rel_err, sgns_loss

RAW = PipelineConfig(stemmer="none", stopwords=frozenset())


def cos(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def toy_corpus(seed=0, n=60):
    rng = np.random.default_rng(seed)
    city = "city river museum travel tourist bridge".split()
    quarry = "quarry granite rock mason chisel wall".split()
    docs = []
    for i in range(n):
        words = list(rng.choice(city, 6)) + ["paris", "france"] if i % 2 == 0 else list(rng.choice(quarry, 6)) + ["stone"]
        rng.shuffle(words)
        docs.append(Document(f"d{i}", " ".join(words)))
    return TrainingCorpus(docs)


SMALL = EmbeddingParams(dim=20, window=5, epochs=5, min_count=1)


def test_sgns_loss_at_zero_dots():
    v = np.array([1.0, 0.0])
    loss, *_ = sgns_pair_objective(v, np.array([0.0, 1.0]), [np.array([0.0, -2.0])])
    assert loss == pytest.approx(2 * -math.log(0.5), abs=1e-12)
    assert loss == pytest.approx(1.3863, abs=1e-4)


def test_sgns_loss_asymptote():
    v = np.array([1.0])
    loss, *_ = sgns_pair_objective(v, np.array([20.0]), [np.array([-20.0])])
    assert loss == pytest.approx(0.0, abs=1e-8)


def test_sgns_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    for _ in range(25):
        v_w, v_c = rng.normal(size=8), rng.normal(size=8)
        negs = rng.normal(size=(int(rng.integers(1, 6)), 8))
        loss, g_w, g_c, g_n = sgns_pair_objective(v_w, v_c, negs)
        assert loss == pytest.approx(sgns_loss(v_w, v_c, negs), abs=1e-12)
        f_w, f_c, f_n = fd_gradients(v_w, v_c, negs)
        assert rel_err(g_w, f_w) <= 1e-4
        assert rel_err(g_c, f_c) <= 1e-4
        assert rel_err(g_n, f_n) <= 1e-4


def test_training_kernel_step_equals_analytic_gradient():
    rng = np.random.default_rng(1)
    u = rng.normal(size=8)
    out = rng.normal(size=(10, 8))
    negs = np.array([3, 4, 5])
    grad = np.zeros(8)
    updated = out.copy()
    loss = sgd_pair(u, updated, 1, negs, 0.1, grad)
    ref, g_w, g_c, g_n = sgns_pair_objective(u, out[1], out[negs])
    assert loss == pytest.approx(ref, abs=1e-12)
    assert np.allclose(grad, -0.1 * g_w, atol=1e-14)
    assert np.allclose(updated[1], out[1] - 0.1 * g_c, atol=1e-14)
    assert np.allclose(updated[negs], out[negs] - 0.1 * g_n, atol=1e-14)


def test_kernel_skips_negative_equal_to_target():
    u = np.ones(4)
    out = np.zeros((3, 4))
    grad = np.zeros(4)
    loss = sgd_pair(u, out, 1, np.array([1, 1]), 0.5, grad)
    assert loss == pytest.approx(math.log(2))


@pytest.mark.parametrize("seed", range(5))
def test_cooccurring_words_end_up_closer(seed):
    s = train_skipgram(toy_corpus(), EmbeddingParams(dim=20, window=5, epochs=5, min_count=1, seed=seed), RAW)
    assert cos(s.word_vector("paris"), s.word_vector("france")) > cos(s.word_vector("paris"), s.word_vector("stone"))


def test_logged_loss_decreases():
    s = train_skipgram(toy_corpus(), SMALL, RAW)
    assert len(s.loss_history) == 5
    assert s.loss_history[-1] < s.loss_history[0]


def test_progress_lines_on_stderr(capsys):
    train_skipgram(toy_corpus(n=6), EmbeddingParams(dim=4, epochs=2, min_count=1), RAW, verbose=True)
    err = capsys.readouterr().err.splitlines()
    assert [line.split()[:2] for line in err] == [["epoch", "1"], ["epoch", "2"]]
    assert all(line.split()[2] == "loss" and float(line.split()[3]) > 0 for line in err)


def test_zero_epochs_keeps_initialisation():
    p = EmbeddingParams(dim=8, epochs=0, min_count=1)
    a = train_skipgram(toy_corpus(), p, RAW)
    b = train_skipgram(toy_corpus(), p, RAW)
    assert np.array_equal(a.word_matrix, b.word_matrix)
    assert np.all(np.abs(a.word_matrix) <= 0.5 / 8)
    assert not np.any(a.context_matrix)


def test_single_threaded_training_is_deterministic():
    a = train_paragraph_vectors(toy_corpus(), SMALL, RAW)
    b = train_paragraph_vectors(toy_corpus(), SMALL, RAW)
    assert np.array_equal(a.word_matrix, b.word_matrix)
    assert np.array_equal(a.doc_matrix, b.doc_matrix)


def test_vocabulary_order_and_min_count():
    s = train_skipgram(TrainingCorpus([Document("a", "x y y z z z")]), EmbeddingParams(dim=4, min_count=2), RAW)
    assert s.words == ["z", "y"]


def test_empty_vocabulary_and_corpus_errors():
    with pytest.raises(D2DError):
        train_skipgram(TrainingCorpus([Document("a", "x y")]), EmbeddingParams(dim=4, min_count=5), RAW)
    with pytest.raises(D2DError):
        train_skipgram(TrainingCorpus([]), SMALL, RAW)


@pytest.mark.parametrize("seed", range(5))
def test_identical_documents_get_similar_vectors(seed):
    rng = np.random.default_rng(seed)
    vocab_a = [f"a{i}" for i in range(15)]
    vocab_b = [f"b{i}" for i in range(15)]
    text = " ".join(rng.choice(vocab_a, 40))
    docs = [Document("twin1", text), Document("twin2", text), Document("other", " ".join(rng.choice(vocab_b, 40)))]
    docs += [Document(f"f{i}", " ".join(rng.choice(vocab_a if i % 2 else vocab_b, 40))) for i in range(20)]
    s = train_paragraph_vectors(TrainingCorpus(docs), EmbeddingParams(dim=20, window=5, epochs=10, min_count=1,
                                                                      seed=seed), RAW)
    assert cos(s.doc_vector("twin1"), s.doc_vector("twin2")) > cos(s.doc_vector("twin1"), s.doc_vector("other"))


def test_single_document_corpus_shape():
    s = train_paragraph_vectors(TrainingCorpus([Document("only", "a b c a b")]),
                                EmbeddingParams(dim=7, min_count=1, epochs=1), RAW)
    assert s.doc_ids == ["only"] and s.doc_matrix.shape == (1, 7)


def test_document_vector_receives_updates():
    corpus = TrainingCorpus([Document("only", "a b c a b")])
    init = train_paragraph_vectors(corpus, EmbeddingParams(dim=7, min_count=1, epochs=0), RAW)
    trained = train_paragraph_vectors(corpus, EmbeddingParams(dim=7, min_count=1, epochs=1), RAW)
    assert not np.array_equal(init.doc_matrix, trained.doc_matrix)


def test_training_corpus_deduplicates():
    docs = [Document(d, d) for d in "abcd"]
    runs = [RankedList(1, ["a", "b"], [2, 1]), RankedList(2, ["a", "c"], [2, 1])]
    assert build_training_corpus(runs, docs, top_n=1).doc_ids == ["a"]
    tc = build_training_corpus(runs, docs, top_n=2)
    assert tc.doc_ids == ["a", "b", "c"]
    assert tc.provenance == {1: ["a", "b"], 2: ["a", "c"]}


def test_training_corpus_size_bound():
    # 100 topics x top-1000 gives at most 100,000 distinct documents
    rng = np.random.default_rng(0)
    pool = [f"D{i}" for i in range(60_000)]
    corpus = {d: Document(d, "x") for d in pool}
    runs = [RankedList(t, list(rng.choice(pool, 1000, replace=False)), np.linspace(1, 0, 1000)) for t in range(100)]
    tc = build_training_corpus(runs, corpus, 1000)
    assert len(tc) <= 100_000
    assert len(tc) == len({d for r in runs for d in r.doc_ids})


def test_training_corpus_errors():
    with pytest.raises(D2DError, match="ghost"):
        build_training_corpus([RankedList(1, ["ghost"], [1.0])], [Document("a", "x")])
    assert len(build_training_corpus([], [Document("a", "x")])) == 0
    with pytest.raises(ValueError):
        build_training_corpus([], [], top_n=0)


def test_normalize_unit():
    assert np.allclose(normalize_unit([3, 4]), [0.6, 0.8])
    v, zero = normalize_unit([0.0, 0.0], return_flag=True)
    assert zero and not v.any()


def test_term_addition_pythagoras():
    # "a" and "b" each occur once in d0 and in equally many documents, so weights are equal
    idx = build_index([Document("d0", "a b"), Document("d1", "c"), Document("d2", "c"), Document("d3", "c")], RAW)
    c = tfidf_weight(1, 1, 4)
    vecs = {"a": np.array([1.0, 0.0]), "b": np.array([0.0, 1.0])}
    v = doc_vector_term_addition("d0", vecs, idx)
    assert np.linalg.norm(v) == pytest.approx(c * math.sqrt(2), abs=1e-12)


def test_term_addition_skips_unknown_words_and_flags_zero():
    idx = build_index([Document("d0", "a q"), Document("d1", "z")], RAW)
    v, zero = doc_vector_term_addition("d1", {"a": np.ones(3)}, idx, return_flag=True)
    assert zero and not v.any()
    store = VectorStore(["a"], np.ones((1, 3)))
    M, mask = term_addition_matrix(idx, store, ["d0", "d1"])
    assert np.allclose(M[0], doc_vector_term_addition("d0", store, idx))
    assert list(mask) == [False, True]


def test_sparse_cosine_half():
    idx = build_index([Document("x", "a b"), Document("y", "b c"), Document("z", "a c")], RAW)
    vx, vy = doc_vector_tfidf_sparse("x", idx), doc_vector_tfidf_sparse("y", idx)
    assert sparse_cosine(vx, vy) == pytest.approx(0.5, abs=1e-12)
    assert sparse_cosine(vx, {}) == 0.0


def test_vector_files_round_trip(tmp_path):
    s = train_paragraph_vectors(toy_corpus(n=10), EmbeddingParams(dim=5, min_count=1, epochs=1), RAW)
    paths = save_vectors(s, tmp_path)
    assert [p.name for p in paths] == ["words.vec", "docs.vec"]
    header = (tmp_path / "words.vec").read_text().splitlines()[0]
    assert header == f"{len(s.words)} 5"
    back = load_vectors(tmp_path)
    assert back.words == s.words and back.doc_ids == s.doc_ids
    assert np.allclose(back.word_matrix, s.word_matrix, rtol=1e-8, atol=0)
    assert np.allclose(back.doc_matrix, s.doc_matrix, rtol=1e-8, atol=0)


def test_malformed_vector_file(tmp_path):
    (tmp_path / "words.vec").write_text("2 3\na 1 2 3\nb 1 2\n")
    with pytest.raises(ParseError) as info:
        load_vectors(tmp_path)
    assert info.value.line == 3


def test_empty_store_writes_header_only(tmp_path):
    save_vectors(VectorStore([], np.zeros((0, 4)), dim=4), tmp_path)
    assert (tmp_path / "words.vec").read_text() == "0 4\n"
    assert load_vectors(tmp_path).dim == 4


def test_term_addition_is_linear():
    idx = build_index([Document("d0", "a b b"), Document("d1", "b c")], RAW)
    rng = np.random.default_rng(0)
    vecs = {t: rng.normal(size=3) for t in "abc"}
    base = doc_vector_term_addition("d0", vecs, idx)
    scaled = doc_vector_term_addition("d0", {t: 2.5 * v for t, v in vecs.items()}, idx)
    assert np.allclose(scaled, 2.5 * base, atol=1e-12)
