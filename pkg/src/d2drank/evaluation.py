"""TREC effectiveness metrics and the experiment protocol around them:
parity cross-validation, exhaustive grid search, and the study relating
gains to the quality of the feedback set."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .corpus_io import Qrels
from .exceptions import UndefinedMetricError
from .runs import RankedList

__all__ = [
    "MetricSpec",
    "SweepGrid",
    "FoldSplit",
    "GridResult",
    "QualityStudy",
    "average_precision",
    "mean_average_precision",
    "ndcg_at_k",
    "ap_at_k",
    "per_topic",
    "evaluate",
    "paired_ttest",
    "parity_split",
    "grid_search",
    "quality_correlation",
    "write_per_topic_csv",
    "write_sweep_csv",
    "write_quality_csv",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetricSpec:
    kind: str = "map"
    cutoff: int | None = None
    gain: str = "binary"

    def __post_init__(self):
        if self.kind not in ("map", "ndcg"):
            raise ValueError(f"unknown metric {self.kind!r}")
        if self.kind == "ndcg" and not self.cutoff:
            raise ValueError("ndcg needs a cutoff")
        if self.gain not in ("binary", "exponential"):
            raise ValueError(f"unknown gain {self.gain!r}")

    @classmethod
    def parse(cls, text: str) -> "MetricSpec":
        """``map``, ``ndcg@20`` or ``ndcg@10:exponential``."""
        text = text.strip().lower()
        gain = "binary"
        if ":" in text:
            text, gain = text.split(":", 1)
        if text == "map":
            return cls("map")
        if text.startswith("ndcg@"):
            return cls("ndcg", int(text[5:]), gain)
        raise ValueError(f"unknown metric {text!r}")

    def __str__(self):
        return "map" if self.kind == "map" else f"ndcg@{self.cutoff}"


def _relevant_or_raise(qrels: Qrels, topic_id: int) -> set[str]:
    rel = qrels.relevant(topic_id)
    if not rel:
        raise UndefinedMetricError(f"topic {topic_id} has no relevant documents")
    return rel


def average_precision(ranked: RankedList, qrels: Qrels, topic_id: int | None = None) -> float:
    """Unjudged documents count as nonrelevant; grades >= 1 are relevant."""
    topic_id = ranked.topic_id if topic_id is None else topic_id
    rel = _relevant_or_raise(qrels, topic_id)
    hits = 0
    total = 0.0
    for rank, doc_id in enumerate(ranked.doc_ids, 1):
        if doc_id in rel:
            hits += 1
            total += hits / rank
    return total / len(rel)


def ap_at_k(ranked: RankedList, qrels: Qrels, topic_id: int | None = None, k: int = 10) -> float:
    """Average precision of the top-k prefix, normalised by min(k, #relevant)."""
    topic_id = ranked.topic_id if topic_id is None else topic_id
    rel = _relevant_or_raise(qrels, topic_id)
    hits = 0
    total = 0.0
    for rank, doc_id in enumerate(ranked.doc_ids[:k], 1):
        if doc_id in rel:
            hits += 1
            total += hits / rank
    return total / min(k, len(rel))


def _gain(grade: int, kind: str) -> float:
    if grade <= 0:
        return 0.0
    return 1.0 if kind == "binary" else 2.0 ** grade - 1.0


def ndcg_at_k(ranked: RankedList, qrels: Qrels, topic_id: int | None = None, k: int = 20,
              gain: str = "binary") -> float:
    topic_id = ranked.topic_id if topic_id is None else topic_id
    _relevant_or_raise(qrels, topic_id)
    grades = qrels.for_topic(topic_id)
    dcg = sum(_gain(grades.get(d, 0), gain) / math.log2(i + 1)
              for i, d in enumerate(ranked.doc_ids[:k], 1))
    ideal = sorted((_gain(g, gain) for g in grades.values()), reverse=True)[:k]
    idcg = sum(g / math.log2(i + 1) for i, g in enumerate(ideal, 1))
    return dcg / idcg


def _metric_fn(metric: MetricSpec) -> Callable[[RankedList, Qrels], float]:
    if metric.kind == "map":
        return lambda rl, q: average_precision(rl, q)
    return lambda rl, q: ndcg_at_k(rl, q, k=metric.cutoff, gain=metric.gain)


def per_topic(runs: Iterable[RankedList], qrels: Qrels, metric: MetricSpec | str = "map") -> dict[int, float]:
    """Metric value per evaluable topic; topics without relevant documents are skipped."""
    if isinstance(metric, str):
        metric = MetricSpec.parse(metric)
    fn = _metric_fn(metric)
    out = {}
    for rl in runs:
        try:
            out[rl.topic_id] = fn(rl, qrels)
        except UndefinedMetricError:
            log.warning("topic %s has no relevant documents; excluded from %s", rl.topic_id, metric)
    return out


def evaluate(runs: Iterable[RankedList], qrels: Qrels, metric: MetricSpec | str = "map") -> float:
    values = per_topic(runs, qrels, metric)
    if not values:
        raise UndefinedMetricError("no evaluable topics")
    return float(np.mean(list(values.values())))


def mean_average_precision(runs: Iterable[RankedList], qrels: Qrels) -> float:
    return evaluate(runs, qrels, MetricSpec("map"))


def paired_ttest(a: Mapping[int, float], b: Mapping[int, float]) -> tuple[float, float]:
    """Two-sided paired t-test over the topics both mappings share.

    Returns ``(t, p)``; identical inputs give ``(0.0, 1.0)``.
    """
    common = sorted(set(a) & set(b))
    if len(common) < 2:
        raise UndefinedMetricError("paired t-test needs at least two shared topics")
    x = np.array([a[t] for t in common])
    y = np.array([b[t] for t in common])
    diff = x - y
    if np.all(diff == diff[0]):
        if diff[0] == 0:
            return 0.0, 1.0
        return math.copysign(math.inf, diff[0]), 0.0
    res = stats.ttest_rel(x, y)
    return float(res.statistic), float(res.pvalue)


@dataclass(frozen=True)
class FoldSplit:
    train: tuple[int, ...]
    test: tuple[int, ...]
    rule: str


def parity_split(topic_ids: Iterable[int]) -> tuple[FoldSplit, FoldSplit]:
    """Fold A trains on odd topic numbers and tests on even ones; fold B the reverse."""
    ids = sorted(set(int(t) for t in topic_ids))
    odd = tuple(t for t in ids if t % 2 == 1)
    even = tuple(t for t in ids if t % 2 == 0)
    if not odd or not even:
        raise ValueError("parity split needs at least one odd and one even topic")
    return FoldSplit(odd, even, "train=odd,test=even"), FoldSplit(even, odd, "train=even,test=odd")


@dataclass(frozen=True)
class SweepGrid:
    lambdas: tuple[float, ...] = tuple(round(i * 0.01, 10) for i in range(101))
    ks: tuple[int, ...] = (10,)

    def __post_init__(self):
        if not self.lambdas or not self.ks:
            raise ValueError("grids must be nonempty")
        if any(not 0 <= x <= 1 for x in self.lambdas):
            raise ValueError("lambda grid must lie within [0, 1]")
        if any(k < 1 for k in self.ks):
            raise ValueError("k grid must be >= 1")

    @staticmethod
    def arithmetic(lo: float, hi: float, step: float) -> tuple[float, ...]:
        """Inclusive grid ``lo, lo+step, ..., hi`` with values rounded to 10 decimals."""
        if step <= 0 or hi < lo:
            raise ValueError("need step > 0 and hi >= lo")
        n = int(math.floor((hi - lo) / step + 1e-9)) + 1
        return tuple(round(lo + i * step, 10) for i in range(n))

    @classmethod
    def parse(cls, lambda_grid: str = "0:1:0.01", ks: str | Sequence[int] = (10,)) -> "SweepGrid":
        lo, hi, step = (float(x) for x in lambda_grid.split(":"))
        if isinstance(ks, str):
            ks = [int(x) for x in ks.split(",") if x.strip()]
        return cls(cls.arithmetic(lo, hi, step), tuple(ks))


@dataclass
class GridResult:
    lam: float
    k: int
    value: float
    table: list[tuple[float, int, float]] = field(default_factory=list)


def grid_search(objective, grid: SweepGrid, train_topics: Sequence[int] | None = None,
                metric: MetricSpec | str = "map") -> GridResult:
    """Exhaustive search for the (lambda, k) maximising the objective.

    ``objective`` is either a callable ``f(lam, k) -> float`` or an object
    with ``evaluate(lam, k, topics, metric)`` (see RerankExperiment).
    Ties go to the smaller lambda, then the smaller k.
    """
    if isinstance(metric, str):
        metric = MetricSpec.parse(metric)
    if hasattr(objective, "evaluate"):
        ctx = objective

        def objective(lam, k):
            return ctx.evaluate(lam, k, train_topics, metric)

    table = []
    best = None
    for k in sorted(grid.ks):
        for lam in sorted(grid.lambdas):
            value = float(objective(lam, k))
            table.append((lam, k, value))
            if best is None or value > best[2]:
                best = (lam, k, value)
            elif value == best[2] and (lam, k) < (best[0], best[1]):
                best = (lam, k, value)
    return GridResult(best[0], best[1], best[2], table)


@dataclass
class QualityStudy:
    rows: list[tuple[int, float, float]]
    pearson_r: float
    degenerate: bool
    excluded: int
    buckets: dict[str, float]


BUCKETS = (("lt_0.1", lambda q: q < 0.1), ("0.1_to_0.9", lambda q: 0.1 <= q <= 0.9), ("gt_0.9", lambda q: q > 0.9))


def bucket_means(rows: Sequence[tuple[int, float, float]]) -> dict[str, float]:
    """Mean improvement for AP@k < 0.1, in [0.1, 0.9], and > 0.9 (NaN if empty)."""
    out = {}
    for name, test in BUCKETS:
        vals = [imp for _, q, imp in rows if test(q)]
        out[name] = float(np.mean(vals)) if vals else float("nan")
    return out


def quality_correlation(base_runs: Iterable[RankedList], reranked_runs: Iterable[RankedList],
                        qrels: Qrels, k: int) -> QualityStudy:
    """Per-topic feedback quality (AP@k of the base run) against percentage
    AP improvement of the re-ranked run, with their Pearson correlation."""
    base = {rl.topic_id: rl for rl in base_runs}
    new = {rl.topic_id: rl for rl in reranked_runs}
    if set(base) != set(new):
        raise ValueError("base and re-ranked runs cover different topics")
    rows = []
    excluded = 0
    for tid in sorted(base):
        if not qrels.relevant(tid):
            excluded += 1
            continue
        ap_base = average_precision(base[tid], qrels)
        if ap_base == 0:
            excluded += 1
            continue
        improvement = (average_precision(new[tid], qrels) - ap_base) / ap_base * 100.0
        rows.append((tid, ap_at_k(base[tid], qrels, k=k), improvement))
    if len(rows) < 2:
        raise UndefinedMetricError("correlation needs at least two evaluable topics")
    x = np.array([r[1] for r in rows])
    y = np.array([r[2] for r in rows])
    degenerate = bool(np.all(x == x[0]) or np.all(y == y[0]))
    r = 0.0 if degenerate else float(stats.pearsonr(x, y)[0])
    return QualityStudy(rows, r, degenerate, excluded, bucket_means(rows))


def _write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def write_per_topic_csv(path, values: Mapping[int, float], metric: MetricSpec | str) -> Path:
    return _write_csv(path, ["topic_id", "metric", "value"],
                      [(t, str(metric), f"{v:.6f}") for t, v in sorted(values.items())])


def write_sweep_csv(path, table: Sequence[tuple[float, int, float]]) -> Path:
    return _write_csv(path, ["lambda", "k", "objective"], [(f"{lam:g}", k, f"{v:.6f}") for lam, k, v in table])


def write_quality_csv(path, study: QualityStudy) -> Path:
    return _write_csv(path, ["topic_id", "ap_at_k", "improvement_pct"],
                      [(t, f"{q:.6f}", f"{imp:.6f}") for t, q, imp in study.rows])
