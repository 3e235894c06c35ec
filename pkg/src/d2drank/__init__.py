"""Lexical retrieval baselines and embedding-based document re-ranking."""

from .corpus_io import Document, PipelineConfig, Qrels, Topic, parse_qrels, parse_topics, parse_trec_docs, tokenize
from .embedding import (
    EmbeddingParams,
    TrainingCorpus,
    VectorStore,
    build_training_corpus,
    load_vectors,
    save_vectors,
    train_paragraph_vectors,
    train_skipgram,
)
from .estimators import Embedder, Reranker, Retriever
from .evaluation import (
    MetricSpec,
    SweepGrid,
    average_precision,
    evaluate,
    grid_search,
    ndcg_at_k,
    parity_split,
    quality_correlation,
)
from .exceptions import D2DError, DuplicateDocumentError, IndexFormatError, MissingVectorError, ParseError
from .experiment import RerankExperiment, cross_validate
from .index import Index, build_index, load_index, lookup, save_index
from .lexical import BM25Params, QLMParams, RM3Params, RocchioParams, rank_bm25, rank_qlm
from .rerank import RerankParams, rerank
from .runs import RankedList, read_run, write_run

__version__ = "0.1.0"
