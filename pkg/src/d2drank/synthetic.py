"""Synthetic test collections built from sibling topics.

Topics come in pairs that share a head word and have interchangeable
modifiers, like "red wine" and "white wine".
Modifiers of a pair appear in the same local frames, so their embeddings
end up close; what separates the siblings is a disjoint set of context
words spread through each document. Some relevant documents never use
their topic's modifier and some documents of the sibling topic mention
it in passing, which leaves room for re-ranking to help.
"""

from __future__ import annotations

import argparse
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus_io import Document, PipelineConfig, Qrels, tokenize

__all__ = ["SyntheticCollection", "make_collection", "pseudo_words", "write_collection"]

_CONSONANTS = "bdfgklmnprtvz"
_VOWELS = "aou"


def pseudo_words(n: int, rng: np.random.Generator, config: PipelineConfig | None = None,
                 syllables: tuple[int, int] = (2, 3)) -> list[str]:
    """Distinct consonant-vowel words that the pipeline maps to themselves."""
    config = config or PipelineConfig()
    out: list[str] = []
    seen: set[str] = set()
    while len(out) < n:
        k = int(rng.integers(syllables[0], syllables[1] + 1))
        w = "".join(rng.choice(list(_CONSONANTS)) + rng.choice(list(_VOWELS)) for _ in range(k))
        if w in seen or tokenize(w, config) != [w]:
            continue
        seen.add(w)
        out.append(w)
    return out


@dataclass
class SyntheticCollection:
    documents: list[Document]
    titles: list[tuple[int, str]]
    qrels: Qrels
    subtopic_of: dict[str, int]

    def topics_tsv(self) -> str:
        return "".join(f"{tid}\t{title}\n" for tid, title in self.titles)

    def qrels_text(self) -> str:
        return "".join(f"{t} 0 {d} {g}\n" for (t, d), g in sorted(self.qrels.judgments.items()))

    def jsonl(self) -> str:
        return "".join(json.dumps({"doc_id": d.doc_id, "text": d.text}) + "\n" for d in self.documents)


def make_collection(seed: int = 0, n_pairs: int = 12, docs_per_topic: int = 70, n_noise: int = 320,
                    doc_length: tuple[int, int] = (60, 100), n_filler: int = 400, n_context: int = 25,
                    implicit_share: float = 0.35, cross_share: float = 0.25,
                    context_share: float = 0.1) -> SyntheticCollection:
    """Build a collection of ``2 * n_pairs`` topics (ids 1..2*n_pairs).

    Per topic, ``implicit_share`` of its documents mention only the head
    word and ``cross_share`` also mention the sibling's modifier once.
    """
    rng = np.random.default_rng(seed)
    words = pseudo_words(n_filler + n_pairs * (3 + 2 * n_context), rng)
    filler = words[:n_filler]
    # Zipf-like filler frequencies
    fw = 1.0 / np.arange(1, n_filler + 1) ** 0.8
    fw /= fw.sum()
    pos = n_filler
    pairs = []
    for _ in range(n_pairs):
        head, mod_a, mod_b = words[pos : pos + 3]
        pos += 3
        ctx_a = words[pos : pos + n_context]
        pos += n_context
        ctx_b = words[pos : pos + n_context]
        pos += n_context
        pairs.append((head, (mod_a, ctx_a), (mod_b, ctx_b)))

    def body(length, ctx):
        toks = list(rng.choice(filler, size=length, p=fw))
        if ctx:
            mask = rng.random(length) < context_share
            picks = rng.choice(ctx, size=int(mask.sum()))
            for i, w in zip(np.flatnonzero(mask), picks):
                toks[i] = w
        return toks

    def insert(toks, phrase):
        at = int(rng.integers(0, len(toks) + 1))
        toks[at:at] = phrase

    raw = []  # (text tokens, topic id or 0)
    titles = []
    for p, (head, side_a, side_b) in enumerate(pairs):
        sides = (side_a, side_b)
        for s, (mod, ctx) in enumerate(sides):
            tid = 2 * p + s + 1
            titles.append((tid, f"{mod} {head}"))
            sibling_mod = sides[1 - s][0]
            for _ in range(docs_per_topic):
                toks = body(int(rng.integers(*doc_length)), ctx)
                u = rng.random()
                mentions = int(rng.integers(1, 4))
                if u < implicit_share:
                    for _ in range(mentions):
                        insert(toks, [head])
                else:
                    for _ in range(mentions):
                        insert(toks, [mod, head])
                    if u < implicit_share + cross_share:
                        insert(toks, [sibling_mod, head])
                raw.append((toks, tid))
    for _ in range(n_noise):
        head, side_a, side_b = pairs[int(rng.integers(n_pairs))]
        mod, ctx = (side_a, side_b)[int(rng.integers(2))]
        # noise borrows a little context so it is not trivially separable
        toks = body(int(rng.integers(*doc_length)), ctx if rng.random() < 0.5 else None)
        insert(toks, [mod, head] if rng.random() < 0.5 else [head])
        raw.append((toks, 0))

    order = rng.permutation(len(raw))
    docs = []
    subtopic_of = {}
    qrels = Qrels()
    width = len(str(len(raw)))
    for n, i in enumerate(order):
        toks, tid = raw[i]
        doc_id = f"SYN-{n:0{width}d}"
        docs.append(Document(doc_id, " ".join(toks)))
        subtopic_of[doc_id] = tid
        if tid:
            qrels.judgments[(tid, doc_id)] = 1
            sibling = tid + 1 if tid % 2 == 1 else tid - 1
            qrels.judgments[(sibling, doc_id)] = 0
    return SyntheticCollection(docs, titles, qrels, subtopic_of)


def write_collection(coll: SyntheticCollection, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "corpus.jsonl", out / "topics.tsv", out / "qrels.txt"]
    paths[0].write_text(coll.jsonl(), encoding="utf-8")
    paths[1].write_text(coll.topics_tsv(), encoding="utf-8")
    paths[2].write_text(coll.qrels_text(), encoding="utf-8")
    return paths


def main(argv=None):
    ap = argparse.ArgumentParser(description="Write a synthetic corpus, topics and qrels.")
    ap.add_argument("--out", required=True)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--pairs", type=int, default=12)
    ap.add_argument("--docs-per-topic", type=int, default=70)
    ap.add_argument("--noise", type=int, default=320)
    args = ap.parse_args(argv)
    coll = make_collection(args.seed, args.pairs, args.docs_per_topic, args.noise)
    for p in write_collection(coll, args.out):
        print(p)


if __name__ == "__main__":
    main()
