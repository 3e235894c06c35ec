"""Run configuration: ``section.key=value`` files, command-line overrides, environment.

Precedence, lowest first: built-in defaults, config file, command-line
flags, then the ``D2D_THREADS`` and ``D2D_SEED`` environment variables.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Mapping

from .corpus_io import PipelineConfig, default_stopwords
from .embedding import EmbeddingParams
from .evaluation import MetricSpec, SweepGrid
from .exceptions import D2DError
from .lexical import BM25Params, QLMParams, RM3Params, RocchioParams
from .rerank import RerankParams

__all__ = ["ConfigError", "RunConfig", "DEFAULTS", "parse_config_text"]


class ConfigError(D2DError, ValueError):
    """Malformed config text or an out-of-range parameter."""


DEFAULTS: dict[str, str] = {
    "paths.corpus": "",
    "paths.corpus_format": "auto",
    "paths.index": "",
    "paths.topics": "",
    "paths.topics_format": "auto",
    "paths.qrels": "",
    "paths.vectors": "",
    "paths.run": "",
    "pipeline.stemmer": "porter",
    "pipeline.lowercase": "true",
    "pipeline.stopwords": "",
    "rank.model": "bm25",
    "rank.prf": "none",
    "rank.depth": "1000",
    "bm25.k1": "1.2",
    "bm25.k3": "1000",
    "bm25.b": "0.75",
    "qlm.mu": "1000",
    "rocchio.fb_docs": "10",
    "rocchio.fb_terms": "10",
    "rocchio.beta": "0.4",
    "rm3.fb_docs": "10",
    "rm3.fb_terms": "50",
    "rm3.alpha": "0.5",
    "embedding.doc_vec": "pv",
    "embedding.dim": "300",
    "embedding.window": "10",
    "embedding.negatives": "5",
    "embedding.epochs": "5",
    "embedding.initial_lr": "0.025",
    "embedding.min_count": "5",
    "embedding.top_n": "1000",
    "rerank.lambda": "0.35",
    "rerank.fb_k": "10",
    "rerank.doc_vec": "pv",
    "rerank.mode": "d2d",
    "sweep.lambda_grid": "0:1:0.01",
    "sweep.fbk_grid": "10",
    "eval.metric": "map",
    "run.threads": "",
    "run.seed": "1",
    "run.deterministic": "false",
}

ENV_OVERRIDES = {"D2D_THREADS": "run.threads", "D2D_SEED": "run.seed"}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``section.key = value`` lines; ``#`` and ``;`` start comments."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or "." not in key:
            raise ConfigError(f"{source}:{lineno}: expected section.key=value, got {raw!r}")
        if key not in DEFAULTS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = value.strip()
    return out


class RunConfig:
    """Resolved settings for one command invocation."""

    def __init__(self, values: Mapping[str, str] | None = None):
        self.values = dict(DEFAULTS)
        for k, v in (values or {}).items():
            if k not in DEFAULTS:
                raise ConfigError(f"unknown key {k!r}")
            self.values[k] = str(v)

    @classmethod
    def load(cls, path=None, overrides: Mapping[str, object] | None = None,
             environ: Mapping[str, str] | None = None) -> "RunConfig":
        values: dict[str, str] = {}
        if path:
            p = Path(path)
            try:
                text = p.read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigError(f"cannot read config file {p}: {exc.strerror}") from None
            values.update(parse_config_text(text, str(p)))
        for k, v in (overrides or {}).items():
            if v is not None:
                values[k] = str(v)
        env = os.environ if environ is None else environ
        for var, key in ENV_OVERRIDES.items():
            if env.get(var):
                values[key] = env[var]
        return cls(values)

    def __getitem__(self, key: str) -> str:
        return self.values[key]

    def get_int(self, key: str) -> int:
        try:
            return int(self.values[key])
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {self.values[key]!r}") from None

    def get_float(self, key: str) -> float:
        try:
            return float(self.values[key])
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {self.values[key]!r}") from None

    def get_bool(self, key: str) -> bool:
        v = self.values[key].lower()
        if v in _TRUE:
            return True
        if v in _FALSE:
            return False
        raise ConfigError(f"{key}: expected a boolean, got {self.values[key]!r}")

    def _build(self, cls, **kwargs):
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    @property
    def threads(self) -> int:
        if not self.values["run.threads"]:
            return os.cpu_count() or 1
        n = self.get_int("run.threads")
        if n < 1:
            raise ConfigError("run.threads must be >= 1")
        return n

    @property
    def training_threads(self) -> int:
        return 1 if self.get_bool("run.deterministic") else self.threads

    @property
    def seed(self) -> int:
        return self.get_int("run.seed")

    def pipeline(self) -> PipelineConfig:
        path = self.values["pipeline.stopwords"]
        if path:
            try:
                words = frozenset(Path(path).read_text(encoding="utf-8").split())
            except OSError as exc:
                raise ConfigError(f"cannot read stopword list {path}: {exc.strerror}") from None
        else:
            words = default_stopwords()
        return self._build(PipelineConfig, stopwords=words, stemmer=self.values["pipeline.stemmer"],
                           lowercase=self.get_bool("pipeline.lowercase"))

    def bm25(self) -> BM25Params:
        return self._build(BM25Params, k1=self.get_float("bm25.k1"), k3=self.get_float("bm25.k3"),
                           b=self.get_float("bm25.b"))

    def qlm(self) -> QLMParams:
        return self._build(QLMParams, mu=self.get_float("qlm.mu"))

    def rocchio(self) -> RocchioParams:
        return self._build(RocchioParams, fb_docs=self.get_int("rocchio.fb_docs"),
                           fb_terms=self.get_int("rocchio.fb_terms"), beta=self.get_float("rocchio.beta"))

    def rm3(self) -> RM3Params:
        return self._build(RM3Params, fb_docs=self.get_int("rm3.fb_docs"), fb_terms=self.get_int("rm3.fb_terms"),
                           alpha=self.get_float("rm3.alpha"))

    def embedding(self) -> EmbeddingParams:
        return self._build(EmbeddingParams, dim=self.get_int("embedding.dim"),
                           window=self.get_int("embedding.window"), negatives=self.get_int("embedding.negatives"),
                           epochs=self.get_int("embedding.epochs"),
                           initial_lr=self.get_float("embedding.initial_lr"),
                           min_count=self.get_int("embedding.min_count"), seed=self.seed,
                           threads=self.training_threads)

    def rerank(self) -> RerankParams:
        return self._build(RerankParams, lam=self.get_float("rerank.lambda"), k=self.get_int("rerank.fb_k"),
                           doc_vector_backend=self.values["rerank.doc_vec"])

    def metric(self) -> MetricSpec:
        try:
            return MetricSpec.parse(self.values["eval.metric"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def grid(self) -> SweepGrid:
        try:
            return SweepGrid.parse(self.values["sweep.lambda_grid"], self.values["sweep.fbk_grid"])
        except ValueError as exc:
            raise ConfigError(f"bad sweep grid: {exc}") from None
