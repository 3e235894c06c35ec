"""Parameter sweeps and cross-validation for semantic re-ranking."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .corpus_io import Qrels, Topic
from .embedding import VectorStore
from .evaluation import (
    FoldSplit,
    GridResult,
    MetricSpec,
    SweepGrid,
    evaluate,
    grid_search,
    parity_split,
    per_topic,
)
from .exceptions import UndefinedMetricError
from .index import Index
from .rerank import candidate_vectors, combine, minmax_normalize, query_vector, rerank_tag, semantic_component
from .runs import RankedList

__all__ = ["RerankExperiment", "CrossValidation", "cross_validate"]


class RerankExperiment:
    """Caches everything that does not depend on lambda so a full sweep
    only repeats the interpolation and the metric."""

    def __init__(self, base_runs: Iterable[RankedList], vectors: VectorStore | None, qrels: Qrels,
                 backend: str = "pv", mode: str = "d2d", index: Index | None = None,
                 topics: Sequence[Topic] | None = None, allow_missing: bool = False):
        self.base = {rl.topic_id: rl for rl in base_runs if len(rl)}
        self.qrels = qrels
        self.mode = mode
        self.backend = backend
        self._r_hat = {t: minmax_normalize(rl.scores) for t, rl in self.base.items()}
        self._U = {}
        for t, rl in self.base.items():
            self._U[t] = candidate_vectors(rl.doc_ids, vectors, backend, index, allow_missing)[0]
        self._qvec = {}
        if mode == "d2q":
            by_id = {tp.topic_id: tp for tp in topics or ()}
            for t in self.base:
                if t not in by_id:
                    raise ValueError(f"d2q mode needs topic {t}")
                self._qvec[t] = query_vector(by_id[t], vectors)
        self._s_hat: dict[tuple[int, int], np.ndarray] = {}

    @property
    def topic_ids(self) -> list[int]:
        return sorted(self.base)

    def _semantic(self, topic_id: int, k: int) -> np.ndarray:
        key = (topic_id, k if self.mode == "d2d" else 0)
        if key not in self._s_hat:
            rl = self.base[topic_id]
            s = semantic_component(rl, self._U[topic_id], k, self.mode, self._qvec.get(topic_id))
            self._s_hat[key] = minmax_normalize(s)
        return self._s_hat[key]

    def run(self, lam: float, k: int, topics: Sequence[int] | None = None) -> list[RankedList]:
        out = []
        for t in topics if topics is not None else self.topic_ids:
            if t not in self.base:
                continue
            rl = self.base[t]
            out.append(combine(rl, self._r_hat[t], self._semantic(t, k), lam,
                               rerank_tag(rl.tag, self.mode, self.backend)))
        return out

    def evaluate(self, lam: float, k: int, topics: Sequence[int] | None = None,
                 metric: MetricSpec | str = "map") -> float:
        return evaluate(self.run(lam, k, topics), self.qrels, metric)


@dataclass
class CrossValidation:
    folds: list[tuple[FoldSplit, GridResult]]
    runs: list[RankedList]
    per_topic: dict[int, float]
    mean: float


def cross_validate(experiment: RerankExperiment, grid: SweepGrid, metric: MetricSpec | str = "map") -> CrossValidation:
    """Two-fold parity cross-validation: tune on one parity, apply to the other."""
    if isinstance(metric, str):
        metric = MetricSpec.parse(metric)
    folds = []
    runs: list[RankedList] = []
    for split in parity_split(experiment.topic_ids):
        best = grid_search(experiment, grid, split.train, metric)
        folds.append((split, best))
        runs.extend(experiment.run(best.lam, best.k, split.test))
    runs.sort(key=lambda rl: rl.topic_id)
    values = per_topic(runs, experiment.qrels, metric)
    if not values:
        raise UndefinedMetricError("no evaluable test topics")
    return CrossValidation(folds, runs, values, float(np.mean(list(values.values()))))
