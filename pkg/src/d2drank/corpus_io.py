"""Reading TREC documents, topics and qrels, and the text pipeline."""

from __future__ import annotations

import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

from nltk.stem.porter import PorterStemmer

from .exceptions import DuplicateDocumentError, ParseError

__all__ = [
    "Document",
    "Topic",
    "Qrels",
    "PipelineConfig",
    "default_stopwords",
    "tokenize",
    "strip_html",
    "parse_trec_docs",
    "parse_topics",
    "parse_qrels",
]

TOKEN_PATTERN = "[a-z0-9]+"
# SGML fields whose content is indexed; everything else (DOCNO, DOCHDR, ...) is metadata
BODY_FIELDS = ("HEADLINE", "TITLE", "HEAD", "HL", "LP", "LEADPARA", "TEXT")


@lru_cache(maxsize=1)
def default_stopwords() -> frozenset[str]:
    text = resources.files("d2drank").joinpath("data/stopwords.txt").read_text("utf-8")
    return frozenset(w for w in text.split() if w)


@dataclass(frozen=True)
class PipelineConfig:
    """Tokenizer settings shared by documents and queries.

    Tokens are maximal runs of ASCII letters and digits. Stopwords are
    removed before stemming.
    """

    stopwords: frozenset[str] = field(default_factory=default_stopwords)
    stemmer: str = "porter"
    lowercase: bool = True
    token_pattern: str = TOKEN_PATTERN

    def __post_init__(self):
        if self.stemmer not in ("porter", "none"):
            raise ValueError(f"stemmer must be 'porter' or 'none', got {self.stemmer!r}")
        object.__setattr__(self, "stopwords", frozenset(self.stopwords))

    def to_dict(self) -> dict:
        return {
            "stopwords": sorted(self.stopwords),
            "stemmer": self.stemmer,
            "lowercase": self.lowercase,
            "token_pattern": self.token_pattern,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        return cls(
            stopwords=frozenset(d["stopwords"]),
            stemmer=d["stemmer"],
            lowercase=bool(d["lowercase"]),
            token_pattern=d["token_pattern"],
        )

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


@lru_cache(maxsize=None)
def _compiled(pattern: str, lowercase: bool):
    return re.compile(pattern if lowercase else pattern.replace("a-z", "A-Za-z"))


_porter = PorterStemmer(mode=PorterStemmer.ORIGINAL_ALGORITHM)


@lru_cache(maxsize=200_000)
def _stem(word: str) -> str:
    return _porter.stem(word, to_lowercase=False)


def tokenize(text: str, config: PipelineConfig | None = None) -> list[str]:
    config = config or PipelineConfig()
    if config.lowercase:
        text = text.lower()
    tokens = _compiled(config.token_pattern, config.lowercase).findall(text)
    stop = config.stopwords
    if config.lowercase:
        tokens = [t for t in tokens if t not in stop]
    else:
        tokens = [t for t in tokens if t.lower() not in stop]
    if config.stemmer == "porter":
        tokens = [_stem(t) for t in tokens]
    return tokens


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    length: int | None = None

    def with_length(self, config: PipelineConfig | None = None) -> "Document":
        return Document(self.doc_id, self.text, len(tokenize(self.text, config)))


@dataclass(frozen=True)
class Topic:
    """A title-only query.

    ``weights`` is set only for expanded queries; it maps each query term
    to a real-valued weight that replaces the qtf-derived one at scoring
    time.
    """

    topic_id: int
    title: str
    terms: tuple[str, ...]
    qtf: dict = field(default_factory=dict)
    weights: dict | None = None

    @classmethod
    def from_title(cls, topic_id: int, title: str, config: PipelineConfig | None = None) -> "Topic":
        terms = tuple(tokenize(title, config))
        return cls(int(topic_id), title, terms, dict(Counter(terms)))

    @property
    def length(self) -> int:
        return sum(self.qtf.values())


_UNJUDGED = None


class Qrels:
    """Relevance judgments keyed by (topic_id, doc_id)."""

    def __init__(self, judgments: dict | None = None):
        self.judgments: dict[tuple[int, str], int] = dict(judgments or {})
        self.overwrites = 0
        self._by_topic: dict[int, dict[str, int]] | None = None

    def grade(self, topic_id: int, doc_id: str):
        """Grade of a pair, or None when unjudged (distinct from grade 0)."""
        return self.judgments.get((int(topic_id), doc_id), _UNJUDGED)

    def is_judged(self, topic_id: int, doc_id: str) -> bool:
        return (int(topic_id), doc_id) in self.judgments

    def for_topic(self, topic_id: int) -> dict[str, int]:
        if self._by_topic is None:
            by: dict[int, dict[str, int]] = {}
            for (tid, did), g in self.judgments.items():
                by.setdefault(tid, {})[did] = g
            self._by_topic = by
        return self._by_topic.get(int(topic_id), {})

    def relevant(self, topic_id: int) -> set[str]:
        return {d for d, g in self.for_topic(topic_id).items() if g >= 1}

    def topics(self) -> list[int]:
        return sorted({tid for tid, _ in self.judgments})

    def __len__(self):
        return len(self.judgments)

    def __contains__(self, key):
        return key in self.judgments


def strip_html(text: str) -> str:
    """Drop markup, decode the five XML entities, collapse whitespace."""
    text = re.sub(r"(?is)<(script|style)\b.*?</\1\s*>", " ", text)
    text = re.sub(r"(?s)<!--.*?-->", " ", text)
    text = re.sub(r"<[^>]*>", " ", text)
    for ent, ch in (("&lt;", "<"), ("&gt;", ">"), ("&quot;", '"'), ("&apos;", "'"), ("&amp;", "&")):
        text = text.replace(ent, ch)
    return " ".join(text.split())


def _read_bytes(stream) -> bytes:
    if isinstance(stream, (bytes, bytearray)):
        return bytes(stream)
    if isinstance(stream, str):
        return stream.encode("utf-8")
    data = stream.read()
    return data.encode("utf-8") if isinstance(data, str) else data


_DOC_RE = re.compile(rb"<DOC>(.*?)</DOC>", re.S | re.I)
_DOCNO_RE = re.compile(rb"<DOCNO>\s*(.*?)\s*</DOCNO>", re.S | re.I)
_FIELD_RE = re.compile(rb"<(" + b"|".join(f.encode() for f in BODY_FIELDS) + rb")\b[^>]*>(.*?)</\1\s*>", re.S | re.I)


_DOC_OPEN_RE = re.compile(rb"<DOC>", re.I)


def _parse_sgml_docs(data: bytes) -> list[Document]:
    docs = []
    pos = 0
    while True:
        opening = _DOC_OPEN_RE.search(data, pos)
        end = len(data) if opening is None else opening.start()
        if data[pos:end].strip():
            raise ParseError("unexpected content outside <DOC> block", offset=pos)
        if opening is None:
            break
        start = opening.start()
        m = _DOC_RE.match(data, start)
        if m is None:
            raise ParseError("unterminated <DOC> block", offset=start)
        body = m.group(1)
        if _DOC_OPEN_RE.search(body):
            raise ParseError("nested <DOC> block", offset=start)
        no = _DOCNO_RE.search(body)
        if no is None or not no.group(1).strip():
            raise ParseError("<DOC> block without <DOCNO>", offset=start)
        doc_id = no.group(1).decode("utf-8", "replace").strip()
        parts = [f.group(2).decode("utf-8", "replace") for f in _FIELD_RE.finditer(body)]
        docs.append(Document(doc_id, strip_html(" ".join(parts))))
        pos = m.end()
    return docs


def _parse_jsonl_docs(data: bytes) -> list[Document]:
    docs = []
    offset = 0
    for lineno, raw in enumerate(data.split(b"\n"), 1):
        line_offset = offset
        offset += len(raw) + 1
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
            doc_id, text = rec["doc_id"], rec["text"]
        except (ValueError, KeyError, TypeError) as exc:
            raise ParseError(f"bad JSONL record: {exc}", offset=line_offset, line=lineno) from None
        if not isinstance(doc_id, str) or not doc_id or not isinstance(text, str):
            raise ParseError("doc_id must be a nonempty string and text a string",
                             offset=line_offset, line=lineno)
        docs.append(Document(doc_id, strip_html(text)))
    return docs


def parse_trec_docs(stream, format: str = "trec_sgml",
                    config: PipelineConfig | None = None) -> list[Document]:
    """Parse a document collection.

    Returns documents in stream order with HTML removed. When ``config``
    is given each document also carries its token count.
    """
    data = _read_bytes(stream)
    if format == "trec_sgml":
        docs = _parse_sgml_docs(data)
    elif format == "jsonl":
        docs = _parse_jsonl_docs(data)
    else:
        raise ValueError(f"unknown document format {format!r}")
    seen = set()
    for d in docs:
        if d.doc_id in seen:
            raise DuplicateDocumentError(d.doc_id)
        seen.add(d.doc_id)
    if config is not None:
        docs = [d.with_length(config) for d in docs]
    return docs


_TOP_RE = re.compile(r"<top>(.*?)</top>", re.S | re.I)
_NUM_RE = re.compile(r"<num>\s*(?:Number:)?\s*([^\s<]+)", re.I)
_TITLE_RE = re.compile(r"<title>\s*(.*?)\s*(?=<|\Z)", re.S | re.I)


def parse_topics(stream, format: str = "tsv", config: PipelineConfig | None = None) -> list[Topic]:
    data = _read_bytes(stream).decode("utf-8")
    topics = []
    if format == "tsv":
        for lineno, line in enumerate(data.splitlines(), 1):
            if not line.strip():
                continue
            cols = line.split("\t", 1)
            tid = _topic_number(cols[0].strip(), lineno)
            if len(cols) < 2 or not cols[1].strip():
                raise ParseError(f"topic {tid} has no title", line=lineno)
            topics.append(Topic.from_title(tid, cols[1].strip(), config))
    elif format == "trec_sgml":
        for block in _TOP_RE.finditer(data):
            lineno = data.count("\n", 0, block.start()) + 1
            num = _NUM_RE.search(block.group(1))
            if num is None:
                raise ParseError("topic without <num>", line=lineno)
            tid = _topic_number(num.group(1), lineno)
            title = _TITLE_RE.search(block.group(1))
            text = title.group(1).strip() if title else ""
            text = re.sub(r"^Topic:\s*", "", text, flags=re.I)
            if not text:
                raise ParseError(f"topic {tid} has no title", line=lineno)
            topics.append(Topic.from_title(tid, " ".join(text.split()), config))
    else:
        raise ValueError(f"unknown topic format {format!r}")
    return topics


def _topic_number(raw: str, lineno: int) -> int:
    try:
        tid = int(raw)
    except ValueError:
        raise ParseError(f"topic id {raw!r} is not an integer", line=lineno) from None
    if tid <= 0:
        raise ParseError(f"topic id {tid} must be positive", line=lineno)
    return tid


def parse_qrels(stream) -> Qrels:
    """Parse ``qid iter docno rel`` lines.

    Later duplicates overwrite earlier ones; the number of overwrites is
    kept on ``Qrels.overwrites``.
    """
    data = _read_bytes(stream).decode("utf-8")
    qrels = Qrels()
    for lineno, line in enumerate(data.splitlines(), 1):
        if not line.strip():
            continue
        cols = line.split()
        if len(cols) != 4:
            raise ParseError(f"expected 4 columns, found {len(cols)}", line=lineno)
        try:
            tid, grade = int(cols[0]), int(cols[3])
        except ValueError:
            raise ParseError("topic id and grade must be integers", line=lineno) from None
        if grade < 0:
            # some collections use -1/-2 for spam or junk; treat as nonrelevant
            grade = 0
        key = (tid, cols[2])
        if key in qrels.judgments:
            qrels.overwrites += 1
        qrels.judgments[key] = grade
    return qrels
