"""In-memory inverted index with collection statistics, plus a binary on-disk form."""

from __future__ import annotations

import json
import struct
import zlib
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .corpus_io import Document, PipelineConfig, tokenize
from .exceptions import DuplicateDocumentError, IndexFormatError

__all__ = ["Posting", "CollectionStats", "Index", "build_index", "lookup", "save_index", "load_index"]

FORMAT_VERSION = 1
MAGIC = b"D2DINDEX"
INDEX_FILE = "index.bin"
MANIFEST_FILE = "manifest.txt"


@dataclass(frozen=True)
class Posting:
    doc_ordinal: int
    tf: int


@dataclass(frozen=True)
class CollectionStats:
    N: int
    avg_l: float
    total_tokens: int
    vocab_size: int


class Index:
    """Postings in CSR layout: the postings of term ``t`` are
    ``doc_ords[offsets[t]:offsets[t+1]]`` with frequencies ``tfs[...]``.

    Instances are treated as immutable once built.
    """

    def __init__(self, terms, offsets, doc_ords, tfs, doc_ids, doc_lengths, ctf, pipeline, stats=None):
        self.terms: list[str] = list(terms)
        self.term_ids: dict[str, int] = {t: i for i, t in enumerate(self.terms)}
        self.offsets = np.asarray(offsets, dtype=np.int64)
        self.doc_ords = np.asarray(doc_ords, dtype=np.int32)
        self.tfs = np.asarray(tfs, dtype=np.int32)
        self.doc_ids: list[str] = list(doc_ids)
        self.doc_ordinals: dict[str, int] = {d: i for i, d in enumerate(self.doc_ids)}
        self.doc_lengths = np.asarray(doc_lengths, dtype=np.int64)
        self.ctf = np.asarray(ctf, dtype=np.int64)
        self.df = np.diff(self.offsets).astype(np.int64)
        self.pipeline: PipelineConfig = pipeline
        if stats is None:
            n = len(self.doc_ids)
            total = int(self.doc_lengths.sum())
            stats = CollectionStats(n, total / n if n else 0.0, total, len(self.terms))
        self.stats: CollectionStats = stats
        self._doc_term = None

    @property
    def N(self) -> int:
        return self.stats.N

    @property
    def usable(self) -> bool:
        """False for an empty collection, which no scoring formula accepts."""
        return self.stats.N > 0

    def term_id(self, term: str) -> int:
        return self.term_ids.get(term, -1)

    def postings(self, term: str) -> tuple[np.ndarray, np.ndarray]:
        tid = self.term_ids.get(term)
        if tid is None:
            return np.empty(0, np.int32), np.empty(0, np.int32)
        lo, hi = self.offsets[tid], self.offsets[tid + 1]
        return self.doc_ords[lo:hi], self.tfs[lo:hi]

    def doc_frequency(self, term: str) -> int:
        tid = self.term_ids.get(term)
        return 0 if tid is None else int(self.df[tid])

    def collection_frequency(self, term: str) -> int:
        tid = self.term_ids.get(term)
        return 0 if tid is None else int(self.ctf[tid])

    def doc_length(self, doc) -> int:
        return int(self.doc_lengths[self.ordinal(doc)])

    def ordinal(self, doc) -> int:
        if isinstance(doc, (int, np.integer)):
            return int(doc)
        return self.doc_ordinals[doc]

    def doc_term_matrix(self) -> sp.csr_matrix:
        """Forward view: documents x terms, entries are raw tf."""
        if self._doc_term is None:
            term_of = np.repeat(np.arange(len(self.terms), dtype=np.int32), self.df)
            m = sp.csr_matrix(
                (self.tfs.astype(np.float64), (self.doc_ords, term_of)),
                shape=(len(self.doc_ids), len(self.terms)),
            )
            m.sort_indices()
            self._doc_term = m
        return self._doc_term

    def doc_terms(self, doc) -> dict[str, int]:
        row = self.doc_term_matrix().getrow(self.ordinal(doc))
        return {self.terms[j]: int(v) for j, v in zip(row.indices, row.data)}

    def tokenize_query(self, text: str) -> list[str]:
        return tokenize(text, self.pipeline)


def build_index(docs: Sequence[Document], config: PipelineConfig | None = None) -> Index:
    """Tokenize and invert ``docs``; ordinals follow input order."""
    config = config or PipelineConfig()
    seen: set[str] = set()
    vocab: dict[str, int] = {}
    rows: list[list[tuple[int, int]]] = []
    lengths = []
    for ordinal, doc in enumerate(docs):
        if doc.doc_id in seen:
            raise DuplicateDocumentError(doc.doc_id)
        seen.add(doc.doc_id)
        tokens = tokenize(doc.text, config)
        lengths.append(len(tokens))
        counts = Counter(tokens)
        for term, tf in counts.items():
            tid = vocab.setdefault(term, len(vocab))
            while len(rows) <= tid:
                rows.append([])
            rows[tid].append((ordinal, tf))
    # lexicon sorted by term so the on-disk layout does not depend on first occurrence
    terms = sorted(vocab)
    offsets = [0]
    doc_ords: list[int] = []
    tfs: list[int] = []
    ctf = []
    for term in terms:
        plist = rows[vocab[term]]
        doc_ords.extend(o for o, _ in plist)
        tfs.extend(f for _, f in plist)
        ctf.append(sum(f for _, f in plist))
        offsets.append(len(doc_ords))
    return Index(terms, offsets, doc_ords, tfs, [d.doc_id for d in docs], lengths, ctf, config)


def lookup(index: Index, term: str) -> tuple[int, list[Posting]]:
    ords, tfs = index.postings(term)
    return len(ords), [Posting(int(o), int(f)) for o, f in zip(ords, tfs)]


# on-disk layout: MAGIC, u32 version, then sections (4-byte tag, u64 length,
# payload), then a u32 CRC32 of everything before it. Little-endian throughout.

def _section(tag: bytes, payload: bytes) -> bytes:
    return tag + struct.pack("<Q", len(payload)) + payload


def _strings(values: Sequence[str]) -> bytes:
    blob = "\n".join(values).encode("utf-8")
    return struct.pack("<Q", len(values)) + blob


def _unstrings(payload: bytes) -> list[str]:
    (count,) = struct.unpack_from("<Q", payload)
    if count == 0:
        return []
    out = payload[8:].decode("utf-8").split("\n")
    if len(out) != count:
        raise IndexFormatError(f"string table holds {len(out)} entries, header says {count}")
    return out


def save_index(index: Index, path) -> Path:
    """Write ``index.bin`` and ``manifest.txt`` into directory ``path``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for s in index.terms + index.doc_ids:
        if "\n" in s:
            raise ValueError(f"identifier {s!r} contains a newline")
    st = index.stats
    body = MAGIC + struct.pack("<I", FORMAT_VERSION)
    body += _section(b"PIPE", json.dumps(index.pipeline.to_dict(), sort_keys=True).encode("utf-8"))
    body += _section(b"LEXI", _strings(index.terms))
    body += _section(b"OFFS", index.offsets.astype("<i8").tobytes())
    body += _section(b"CTFS", index.ctf.astype("<i8").tobytes())
    body += _section(b"POSD", index.doc_ords.astype("<i4").tobytes())
    body += _section(b"POST", index.tfs.astype("<i4").tobytes())
    body += _section(b"DOCS", _strings(index.doc_ids))
    body += _section(b"DLEN", index.doc_lengths.astype("<i8").tobytes())
    body += _section(b"STAT", struct.pack("<QdQQ", st.N, st.avg_l, st.total_tokens, st.vocab_size))
    body += struct.pack("<I", zlib.crc32(body))
    (path / INDEX_FILE).write_bytes(body)
    manifest = (
        f"format_version={FORMAT_VERSION}\n"
        f"N={st.N}\n"
        f"avg_l={st.avg_l!r}\n"
        f"total_tokens={st.total_tokens}\n"
        f"vocab_size={st.vocab_size}\n"
        f"pipeline_hash={index.pipeline.fingerprint()}\n"
    )
    (path / MANIFEST_FILE).write_text(manifest, encoding="utf-8")
    return path


def read_manifest(path) -> dict[str, str]:
    out = {}
    for line in (Path(path) / MANIFEST_FILE).read_text(encoding="utf-8").splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def load_index(path) -> Index:
    path = Path(path)
    file = path / INDEX_FILE if path.is_dir() else path
    try:
        data = file.read_bytes()
    except OSError as exc:
        raise IndexFormatError(f"cannot read index {file}: {exc}") from None
    if len(data) < len(MAGIC) + 8 or data[: len(MAGIC)] != MAGIC:
        raise IndexFormatError(f"{file} is not an index file")
    (version,) = struct.unpack_from("<I", data, len(MAGIC))
    if version != FORMAT_VERSION:
        raise IndexFormatError(f"index format version mismatch: expected {FORMAT_VERSION}, found {version}")
    (crc,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[:-4]) != crc:
        raise IndexFormatError(f"{file} is truncated or corrupt (checksum mismatch)")
    sections = {}
    pos = len(MAGIC) + 4
    end = len(data) - 4
    while pos < end:
        if pos + 12 > end:
            raise IndexFormatError("truncated section header")
        tag = data[pos : pos + 4]
        (length,) = struct.unpack_from("<Q", data, pos + 4)
        pos += 12
        if pos + length > end:
            raise IndexFormatError(f"section {tag!r} runs past end of file")
        sections[tag] = data[pos : pos + length]
        pos += length
    try:
        pipeline = PipelineConfig.from_dict(json.loads(sections[b"PIPE"]))
        terms = _unstrings(sections[b"LEXI"])
        doc_ids = _unstrings(sections[b"DOCS"])
        offsets = np.frombuffer(sections[b"OFFS"], dtype="<i8")
        ctf = np.frombuffer(sections[b"CTFS"], dtype="<i8")
        doc_ords = np.frombuffer(sections[b"POSD"], dtype="<i4")
        tfs = np.frombuffer(sections[b"POST"], dtype="<i4")
        lengths = np.frombuffer(sections[b"DLEN"], dtype="<i8")
        n, avg_l, total, vocab = struct.unpack("<QdQQ", sections[b"STAT"])
    except KeyError as exc:
        raise IndexFormatError(f"missing section {exc.args[0]!r}") from None
    if len(offsets) != len(terms) + 1 or len(lengths) != len(doc_ids) or len(ctf) != len(terms):
        raise IndexFormatError("section sizes are inconsistent")
    return Index(terms, offsets, doc_ords, tfs, doc_ids, lengths, ctf, pipeline,
                 CollectionStats(int(n), float(avg_l), int(total), int(vocab)))
