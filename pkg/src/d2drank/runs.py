"""Ranked lists and TREC run files (``topic Q0 doc rank score tag``)."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .exceptions import ParseError

__all__ = ["RankedList", "write_run", "read_run", "format_run"]


@dataclass(eq=False)
class RankedList:
    """Per-topic ranking. Rank of entry ``i`` is ``i + 1``."""

    topic_id: int
    doc_ids: tuple[str, ...]
    scores: np.ndarray
    tag: str = ""
    flags: set = field(default_factory=set)

    def __post_init__(self):
        self.topic_id = int(self.topic_id)
        self.doc_ids = tuple(self.doc_ids)
        self.scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        if len(self.doc_ids) != len(self.scores):
            raise ValueError("doc_ids and scores differ in length")
        if len(set(self.doc_ids)) != len(self.doc_ids):
            raise ValueError(f"duplicate doc_id in ranking for topic {self.topic_id}")
        if len(self.scores) > 1 and np.any(np.diff(self.scores) > 0):
            raise ValueError(f"scores of topic {self.topic_id} are not non-increasing")

    def __len__(self):
        return len(self.doc_ids)

    @property
    def entries(self) -> list[tuple[str, float, int]]:
        return [(d, float(s), r) for r, (d, s) in enumerate(zip(self.doc_ids, self.scores), 1)]

    def head(self, depth: int) -> "RankedList":
        return RankedList(self.topic_id, self.doc_ids[:depth], self.scores[:depth], self.tag, set(self.flags))

    @classmethod
    def from_scores(cls, topic_id, doc_ids: Sequence[str], scores, tag="", order_keys=None, depth=None):
        """Sort by descending score, ties by ascending ``order_keys``
        (defaults to input position)."""
        scores = np.asarray(scores, dtype=np.float64)
        keys = np.arange(len(scores)) if order_keys is None else np.asarray(order_keys)
        order = np.lexsort((keys, -scores))
        if depth is not None:
            order = order[:depth]
        return cls(topic_id, tuple(doc_ids[i] for i in order), scores[order], tag)


def format_run(ranked: Iterable[RankedList], tag: str | None = None) -> str:
    lines = []
    for rl in ranked:
        t = tag if tag is not None else (rl.tag or "run")
        for doc_id, score, rank in rl.entries:
            lines.append(f"{rl.topic_id} Q0 {doc_id} {rank} {score:.6f} {t}")
    return "\n".join(lines) + ("\n" if lines else "")


def write_run(ranked: Iterable[RankedList], path, tag: str | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_run(ranked, tag))
    return path


def parse_run(text: str) -> list[RankedList]:
    rows: dict[int, list[tuple[int, str, float, int]]] = {}
    tags: dict[int, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        cols = line.split()
        if len(cols) != 6:
            raise ParseError(f"run line needs 6 columns, found {len(cols)}", line=lineno)
        try:
            tid, rank, score = int(cols[0]), int(cols[3]), float(cols[4])
        except ValueError:
            raise ParseError("topic, rank and score must be numeric", line=lineno) from None
        rows.setdefault(tid, []).append((rank, cols[2], score, lineno))
        tags.setdefault(tid, cols[5])
    out = []
    for tid in sorted(rows):
        entries = sorted(rows[tid])
        seen = set()
        for expected, (rank, doc_id, score, lineno) in enumerate(entries, 1):
            if rank != expected:
                raise ParseError(f"topic {tid}: expected rank {expected}, found {rank}", line=lineno)
            if doc_id in seen:
                raise ParseError(f"topic {tid}: duplicate document {doc_id}", line=lineno)
            seen.add(doc_id)
            if expected > 1 and score > entries[expected - 2][2]:
                raise ParseError(f"topic {tid}: score increases at rank {rank}", line=lineno)
        out.append(RankedList(tid, [e[1] for e in entries], [e[2] for e in entries], tags[tid]))
    return out


def read_run(path) -> list[RankedList]:
    """Read a run file; lines may come in any order."""
    return parse_run(Path(path).read_text(encoding="utf-8"))
