"""CoNLL-style corpus reading, vocabularies and pretrained embeddings."""
from __future__ import annotations

import logging
import os
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import BIOError, DataError, FormatError

log = logging.getLogger(__name__)

OOV_TOKEN = "<oov>"
UNK_CHAR = "<unk>"

_BIO_RE = re.compile(r"^(?:O|([BI])-(.+))$")


@dataclass(frozen=True)
class Sentence:
    words: tuple[str, ...]
    tags: tuple[str, ...] | None = None

    def __post_init__(self):
        if not self.words:
            raise ValueError("sentence must contain at least one token")
        if any(not w for w in self.words):
            raise ValueError("token surfaces must be non-empty")
        if self.tags is not None and len(self.tags) != len(self.words):
            raise ValueError("tags and words differ in length")

    def __len__(self):
        return len(self.words)


def read_conll(stream: TextIO | Iterable[str], token_column: int = 0,
               tag_column: int | None = -1) -> list[Sentence]:
    """Parse blank-line separated sentences of whitespace-separated columns.

    ``tag_column=None`` reads tokens only. Lines starting with ``-DOCSTART-``
    are treated as sentence boundaries.
    """
    sentences = []
    words: list[str] = []
    tags: list[str] = []
    needed = max(_col_need(token_column), _col_need(tag_column))
    if tag_column is not None:
        needed = max(needed, 2)

    def flush():
        if words:
            sentences.append(Sentence(tuple(words), tuple(tags) if tag_column is not None else None))
            words.clear()
            tags.clear()

    for lineno, line in enumerate(stream, 1):
        cols = line.split()
        if not cols or cols[0] == "-DOCSTART-":
            flush()
            continue
        if len(cols) < needed:
            raise FormatError(f"expected at least {needed} columns, got {len(cols)}", lineno)
        words.append(cols[token_column])
        if tag_column is not None:
            tags.append(cols[tag_column])
    flush()
    return sentences


def _col_need(col):
    if col is None:
        return 1
    return col + 1 if col >= 0 else -col


def write_conll(sentences: Iterable[Sentence], stream: TextIO, extra: Sequence[Sequence[str]] | None = None):
    """Write sentences back in two-column form, optionally appending a column per sentence."""
    for i, sent in enumerate(sentences):
        for j, word in enumerate(sent.words):
            cols = [word]
            if sent.tags is not None:
                cols.append(sent.tags[j])
            if extra is not None:
                cols.append(extra[i][j])
            stream.write(" ".join(cols) + "\n")
        stream.write("\n")


def parse_bio(label: str) -> tuple[str, str | None]:
    m = _BIO_RE.match(label)
    if m is None:
        raise BIOError(f"label {label!r} is not O, B-X or I-X")
    if label == "O":
        return "O", None
    return m.group(1), m.group(2)


def validate_bio(tags: Sequence[str]) -> list[int]:
    """Return positions of I-X tags not preceded by B-X or I-X; empty list means valid."""
    violations = []
    prev_type = None
    for i, tag in enumerate(tags):
        prefix, kind = parse_bio(tag)
        if prefix == "I" and kind != prev_type:
            violations.append(i)
        prev_type = kind
    return violations


def repair_bio(tags: Sequence[str]) -> tuple[str, ...]:
    """Rewrite orphan I-X tags to B-X."""
    bad = set(validate_bio(tags))
    return tuple("B-" + t[2:] if i in bad else t for i, t in enumerate(tags))


def is_bio_label(label: str) -> bool:
    return _BIO_RE.match(label) is not None


@dataclass
class Dataset:
    train: list[Sentence]
    dev: list[Sentence] = field(default_factory=list)
    test: list[Sentence] = field(default_factory=list)
    labels: list[str] = field(default_factory=list)
    scheme: str = "NONE"

    def __post_init__(self):
        if not self.labels:
            seen = {}
            for split in (self.train, self.dev, self.test):
                for sent in split:
                    for t in sent.tags or ():
                        seen.setdefault(t, len(seen))
            self.labels = list(seen)
        self._label_index = {t: i for i, t in enumerate(self.labels)}

    @property
    def label_index(self) -> dict[str, int]:
        return self._label_index

    def tag_ids(self, sent: Sentence) -> np.ndarray:
        try:
            return np.array([self._label_index[t] for t in sent.tags], dtype=np.int64)
        except KeyError as exc:
            raise DataError(f"label {exc.args[0]!r} not in inventory") from None


def load_dataset(train_path, dev_path=None, test_path=None, scheme="auto", strict=True,
                 token_column=0, tag_column=-1) -> Dataset:
    """Read up to three CoNLL files and check the BIO scheme.

    ``scheme='auto'`` picks BIO when every label parses as O/B-X/I-X.
    Strict mode raises on BIO violations; lenient mode logs and repairs I- to B-.
    """
    splits = []
    for path in (train_path, dev_path, test_path):
        if path is None:
            splits.append([])
            continue
        with open(path, encoding="utf-8") as fh:
            splits.append(read_conll(fh, token_column, tag_column))
    if not splits[0]:
        raise DataError(f"training file {train_path} has no sentences")
    labels = {t for split in splits for s in split for t in s.tags}
    if scheme == "auto":
        scheme = "BIO" if all(is_bio_label(t) for t in labels) else "NONE"
    if scheme == "BIO":
        splits = [_check_bio(split, strict, name) for split, name in zip(splits, ("train", "dev", "test"))]
    return Dataset(*splits, scheme=scheme)


def _check_bio(sentences, strict, name):
    out = []
    for i, sent in enumerate(sentences):
        bad = validate_bio(sent.tags)
        if bad:
            if strict:
                raise BIOError(f"{name} sentence {i}: BIO violation at positions {bad}")
            log.warning("%s sentence %d: repairing BIO violation at %s", name, i, bad)
            sent = Sentence(sent.words, repair_bio(sent.tags))
        out.append(sent)
    return out


class WordVocab:
    """Word to index map with a single OOV entry appended last."""

    def __init__(self, words: Sequence[str], lowercase: bool = True):
        self.lowercase = lowercase
        self.words = list(words)
        if OOV_TOKEN in self.words:
            raise ValueError("OOV token must not be passed explicitly")
        self.words.append(OOV_TOKEN)
        self.index = {w: i for i, w in enumerate(self.words)}
        if len(self.index) != len(self.words):
            raise ValueError("duplicate vocabulary entries")
        self.oov_index = len(self.words) - 1

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return self.key(word) in self.index

    def key(self, word: str) -> str:
        return word.lower() if self.lowercase else word

    def lookup(self, word: str) -> int:
        return self.index.get(self.key(word), self.oov_index)

    def encode(self, words: Iterable[str]) -> np.ndarray:
        return np.array([self.lookup(w) for w in words], dtype=np.int64)

    def to_dict(self):
        return {"lowercase": self.lowercase, "words": self.words[:-1]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["words"], lowercase=d["lowercase"])


def build_vocab(train: Iterable[Sentence], min_count: int = 1, lowercase: bool = True) -> WordVocab:
    counts: Counter[str] = Counter()
    order: dict[str, None] = {}
    for sent in train:
        for w in sent.words:
            k = w.lower() if lowercase else w
            counts[k] += 1
            order.setdefault(k)
    return WordVocab([w for w in order if counts[w] >= min_count and w != OOV_TOKEN], lowercase)


class Alphabet:
    """Character inventory; unseen characters share one bucket at the last index."""

    def __init__(self, chars: Sequence[str]):
        self.chars = list(chars)
        self.index = {c: i for i, c in enumerate(self.chars)}
        if len(self.index) != len(self.chars):
            raise ValueError("duplicate characters")
        self.unknown_index = len(self.chars)

    def __len__(self):
        return len(self.chars) + 1

    def lookup(self, ch: str) -> int:
        return self.index.get(ch, self.unknown_index)

    def to_dict(self):
        return {"chars": self.chars}

    @classmethod
    def from_dict(cls, d):
        return cls(d["chars"])


def build_alphabet(train: Iterable[Sentence]) -> Alphabet:
    order: dict[str, None] = {}
    for sent in train:
        for w in sent.words:
            for ch in w:
                order.setdefault(ch)
    return Alphabet(list(order))


def default_alphabet() -> Alphabet:
    return Alphabet([chr(c) for c in range(ord("a"), ord("z") + 1)])


def init_embeddings(vocab: WordVocab, dim: int, seed: int, dtype=np.float32) -> np.ndarray:
    """Seeded uniform(-0.5/dim, 0.5/dim) matrix, one row per vocabulary entry."""
    rng = np.random.default_rng([seed, 0xE])
    bound = 0.5 / dim
    return rng.uniform(-bound, bound, size=(len(vocab), dim)).astype(dtype)


def load_embeddings(path: str | os.PathLike, vocab: WordVocab, dim: int, seed: int = 0,
                    dtype=np.float32) -> np.ndarray:
    """Copy pretrained rows for vocabulary words; other rows keep the seeded init.

    Every line is checked for ``dim + 1`` fields. The first occurrence of a
    word wins.
    """
    emb = init_embeddings(vocab, dim, seed, dtype=np.float64)
    filled = np.zeros(len(vocab), dtype=bool)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) == 1 and not parts[0].strip():
                continue
            if len(parts) != dim + 1:
                parts = line.split()
                if len(parts) != dim + 1:
                    raise FormatError(f"expected {dim} vector values, got {len(parts) - 1}", lineno)
            idx = vocab.index.get(vocab.key(parts[0]))
            if idx is None or idx == vocab.oov_index or filled[idx]:
                continue
            try:
                row = np.array(parts[1:], dtype=np.float64)
            except ValueError:
                raise FormatError("non-numeric vector value", lineno) from None
            if not np.all(np.isfinite(row)):
                raise FormatError("non-finite vector value", lineno)
            emb[idx] = row
            filled[idx] = True
    log.info("embeddings: %d/%d vocabulary words found in %s", int(filled.sum()), len(vocab) - 1, path)
    return emb.astype(dtype)
