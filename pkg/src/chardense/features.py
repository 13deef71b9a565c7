"""Sparse character-level word features.

A word is split into ``k`` pieces by greedy n-gram merging, each piece becomes
a bag-of-characters count vector plus a one-hot order class, a word-length
one-hot is appended, and the concatenation is normalized to sum to one.
"""
from __future__ import annotations

import io
import threading
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .corpus import Alphabet, Sentence
from .errors import FormatError

MAX_LENGTH = 20
LENGTH_DIM = MAX_LENGTH + 1
ASC, EQ, DES = 0, 1, 2
ORDER_NAMES = ("ASC", "EQ", "DES")


class NgramStats:
    """Token-weighted substring counts for lengths 2..max_n."""

    def __init__(self, counts: dict[str, int] | None = None, max_n: int = 8):
        if max_n < 2:
            raise ValueError("max_n must be >= 2")
        self.max_n = max_n
        self.counts = dict(counts or {})
        for s, c in self.counts.items():
            if c < 1 or not 2 <= len(s) <= max_n:
                raise ValueError(f"bad n-gram entry {s!r}: {c}")

    def __getitem__(self, s: str) -> int:
        return self.counts.get(s, 0)

    def __len__(self):
        return len(self.counts)

    def __eq__(self, other):
        return isinstance(other, NgramStats) and self.max_n == other.max_n and self.counts == other.counts

    def dumps(self) -> str:
        out = io.StringIO()
        out.write(f"max_n={self.max_n}\n")
        for s, c in sorted(self.counts.items(), key=lambda kv: (-kv[1], kv[0])):
            out.write(f"{s}\t{c}\n")
        return out.getvalue()

    @classmethod
    def loads(cls, text: str) -> "NgramStats":
        lines = text.split("\n")
        header = lines[0]
        if not header.startswith("max_n="):
            raise FormatError("missing max_n header", 1)
        max_n = int(header[len("max_n="):])
        counts = {}
        for lineno, line in enumerate(lines[1:], 2):
            if not line:
                continue
            s, sep, c = line.rpartition("\t")
            if not sep:
                raise FormatError("expected substring<TAB>count", lineno)
            counts[s] = int(c)
        return cls(counts, max_n)


def collect_ngram_stats(train: Iterable[Sentence], max_n: int = 8) -> NgramStats:
    if max_n < 2:
        raise ValueError("max_n must be >= 2")
    word_freq = Counter(w for sent in train for w in sent.words)
    counts: Counter[str] = Counter()
    for w, f in word_freq.items():
        n = len(w)
        for i in range(n - 1):
            for j in range(i + 2, min(n, i + max_n) + 1):
                counts[w[i:j]] += f
    return NgramStats(dict(counts), max_n)


def split_word(word: str, stats: NgramStats, k: int, trace: list | None = None) -> tuple[str, ...]:
    """Split ``word`` into exactly ``k`` pieces.

    Adjacent pieces are merged greedily by the count of their concatenation
    (leftmost pair wins ties, including the all-zero case) until ``k`` pieces
    remain; short words are padded with empty pieces. When ``trace`` is a
    list, each merge appends ``(position, candidate_counts)``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    pieces = list(word)
    while len(pieces) > k:
        cands = [stats[pieces[i] + pieces[i + 1]] for i in range(len(pieces) - 1)]
        m = max(range(len(cands)), key=cands.__getitem__)
        if trace is not None:
            trace.append((m, cands))
        pieces[m:m + 2] = [pieces[m] + pieces[m + 1]]
    pieces.extend([""] * (k - len(pieces)))
    return tuple(pieces)


class OrderCounts(NamedTuple):
    c_asc: int
    c_des: int
    klass: int


def char_order(piece: str) -> OrderCounts:
    """Count ascending and descending adjacent code-point pairs."""
    asc = des = 0
    for a, b in zip(piece, piece[1:]):
        if a < b:
            asc += 1
        elif a > b:
            des += 1
    klass = ASC if asc > des else DES if asc < des else EQ
    return OrderCounts(asc, des, klass)


def boc_vector(piece: str, alphabet: Alphabet) -> np.ndarray:
    v = np.zeros(len(alphabet), dtype=np.float64)
    for ch in piece:
        v[alphabet.lookup(ch)] += 1
    return v


def length_onehot(word: str) -> np.ndarray:
    v = np.zeros(LENGTH_DIM, dtype=np.float64)
    v[min(len(word), MAX_LENGTH)] = 1.0
    return v


def normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if np.any(v < 0):
        raise ValueError("normalize requires nonnegative entries")
    total = v.sum()
    if total == 0:
        return v.copy()
    return v / total


def feature_dim(alphabet_size: int, k: int) -> int:
    return k * (alphabet_size + 3) + LENGTH_DIM


def raw_features(word: str, stats: NgramStats, alphabet: Alphabet, k: int) -> np.ndarray:
    """Unnormalized concatenation of per-piece BOC/order blocks and the length one-hot."""
    a = len(alphabet)
    out = np.zeros(feature_dim(a, k), dtype=np.float64)
    for i, piece in enumerate(split_word(word, stats, k)):
        base = i * (a + 3)
        for ch in piece:
            out[base + alphabet.lookup(ch)] += 1
        out[base + a + char_order(piece).klass] = 1.0
    out[k * (a + 3) + min(len(word), MAX_LENGTH)] = 1.0
    return out


def featurize_word(word: str, stats: NgramStats, alphabet: Alphabet, k: int) -> np.ndarray:
    if not word:
        raise ValueError("cannot featurize an empty word")
    return normalize(raw_features(word, stats, alphabet, k))


@dataclass
class Featurizer:
    """Bundles (stats, alphabet, k) with a thread-safe per-word cache."""

    stats: NgramStats
    alphabet: Alphabet
    k: int = 2

    def __post_init__(self):
        self.cache: dict[str, np.ndarray] = {}
        self.computations = 0
        self._lock = threading.Lock()

    @property
    def dim(self) -> int:
        return feature_dim(len(self.alphabet), self.k)

    def compute(self, word: str) -> np.ndarray:
        return featurize_word(word, self.stats, self.alphabet, self.k)

    def get(self, word: str) -> np.ndarray:
        vec = self.cache.get(word)
        if vec is not None:
            return vec
        vec = self.compute(word)
        vec.setflags(write=False)
        with self._lock:
            if word not in self.cache:
                self.computations += 1
            return self.cache.setdefault(word, vec)

    def matrix(self, words, dtype=np.float64) -> np.ndarray:
        return np.stack([self.get(w) for w in words]).astype(dtype, copy=False)

    def clear(self):
        with self._lock:
            self.cache.clear()
            self.computations = 0


def cache_get_or_compute(featurizer: Featurizer, word: str) -> np.ndarray:
    return featurizer.get(word)
