"""conlleval-compatible chunk scoring and token accuracy."""
from __future__ import annotations

import io
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .corpus import parse_bio


def _as_sentences(seqs):
    if seqs and isinstance(seqs[0], str):
        return [seqs]
    return seqs


def _check_lengths(gold, pred):
    if len(gold) != len(pred):
        raise ValueError(f"length mismatch: {len(gold)} gold vs {len(pred)} predicted sequences")
    for i, (g, p) in enumerate(zip(gold, pred)):
        if len(g) != len(p):
            raise ValueError(f"length mismatch in sequence {i}: {len(g)} gold vs {len(p)} predicted")


def extract_chunks(tags: Sequence[str]) -> list[tuple[str, int, int]]:
    """(type, start, end-exclusive) spans; an I-X that cannot continue a chunk opens a new one."""
    chunks = []
    start = kind = None
    for i, tag in enumerate(tags):
        prefix, t = parse_bio(tag)
        opens = prefix == "B" or (prefix == "I" and t != kind)
        if kind is not None and (prefix == "O" or opens):
            chunks.append((kind, start, i))
            kind = None
        if opens:
            start, kind = i, t
    if kind is not None:
        chunks.append((kind, start, len(tags)))
    return chunks


def _prf(correct, found, gold):
    p = 100.0 * correct / found if found else 0.0
    r = 100.0 * correct / gold if gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


@dataclass
class ChunkMetrics:
    precision: float
    recall: float
    f1: float
    correct: int
    found: int
    gold: int
    tokens: int
    token_correct: int
    per_type: dict[str, tuple[float, float, float, int]] = field(default_factory=dict)

    @property
    def accuracy(self):
        return 100.0 * self.token_correct / self.tokens if self.tokens else 0.0

    def report(self) -> str:
        out = io.StringIO()
        out.write(f"processed {self.tokens} tokens with {self.gold} phrases; "
                  f"found: {self.found} phrases; correct: {self.correct}.\n")
        out.write(f"accuracy: {self.accuracy:6.2f}%; precision: {self.precision:6.2f}%; "
                  f"recall: {self.recall:6.2f}%; FB1: {self.f1:6.2f}\n")
        for t in sorted(self.per_type):
            p, r, f, n = self.per_type[t]
            out.write(f"{t:>17s}: precision: {p:6.2f}%; recall: {r:6.2f}%; FB1: {f:6.2f}  {n}\n")
        return out.getvalue()


def chunk_f1(gold, pred) -> ChunkMetrics:
    """Micro-averaged chunk P/R/F1 (percent) with exact (type, start, end) matching."""
    gold, pred = _as_sentences(gold), _as_sentences(pred)
    _check_lengths(gold, pred)
    n_gold, n_found, n_correct = Counter(), Counter(), Counter()
    tokens = tok_ok = 0
    for g, p in zip(gold, pred):
        gc, pc = set(extract_chunks(g)), set(extract_chunks(p))
        n_gold.update(c[0] for c in gc)
        n_found.update(c[0] for c in pc)
        n_correct.update(c[0] for c in gc & pc)
        tokens += len(g)
        tok_ok += sum(a == b for a, b in zip(g, p))
    per_type = {}
    for t in set(n_gold) | set(n_found):
        per_type[t] = (*_prf(n_correct[t], n_found[t], n_gold[t]), n_found[t])
    c, f, g = sum(n_correct.values()), sum(n_found.values()), sum(n_gold.values())
    return ChunkMetrics(*_prf(c, f, g), c, f, g, tokens, tok_ok, per_type)


def token_accuracy(gold, pred) -> float:
    """Percent of matching tokens, pooled over all sentences."""
    gold, pred = _as_sentences(gold), _as_sentences(pred)
    _check_lengths(gold, pred)
    total = sum(len(g) for g in gold)
    if total == 0:
        return 0.0
    return 100.0 * sum(a == b for g, p in zip(gold, pred) for a, b in zip(g, p)) / total


def score(gold, pred, metric="accuracy") -> float:
    if metric == "accuracy":
        return token_accuracy(gold, pred)
    if metric == "f1":
        return chunk_f1(gold, pred).f1
    raise ValueError(f"unknown metric {metric!r}")
