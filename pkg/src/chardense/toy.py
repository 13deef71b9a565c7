"""Synthetic corpus whose tags are a function of word suffix and capitalization.

Held-out splits draw fresh random stems, so most test words are out of
vocabulary and only the character channel can recover the tag.

    python -m chardense.toy OUTDIR [--seed N] [--train 200]
"""
from __future__ import annotations

import argparse
import os

import numpy as np

from .corpus import Dataset, Sentence, write_conll

# stem letters are disjoint from suffix letters
STEM_LETTERS = "bcfhkopstvwz"
SUFFIXES = {"ing": "VBG", "ed": "VBD", "ly": "ADV", "ar": "NN", "um": "NUM"}


def toy_word(rng) -> tuple[str, str]:
    stem = "".join(rng.choice(list(STEM_LETTERS), size=int(rng.integers(2, 6))))
    suffix = list(SUFFIXES)[int(rng.integers(len(SUFFIXES)))]
    tag = SUFFIXES[suffix]
    if rng.random() < 0.5:
        return (stem + suffix).upper(), tag + "-CAP"
    return stem + suffix, tag


def toy_sentences(n: int, seed: int) -> list[Sentence]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        pairs = [toy_word(rng) for _ in range(int(rng.integers(4, 11)))]
        out.append(Sentence(tuple(w for w, _ in pairs), tuple(t for _, t in pairs)))
    return out


def toy_labels() -> list[str]:
    return [t + c for t in SUFFIXES.values() for c in ("", "-CAP")]


def toy_dataset(n_train=200, n_dev=50, n_test=100, seed=0) -> Dataset:
    return Dataset(toy_sentences(n_train, seed), toy_sentences(n_dev, seed + 1000),
                   toy_sentences(n_test, seed + 2000), labels=toy_labels())


def write_toy(outdir, **kwargs) -> Dataset:
    ds = toy_dataset(**kwargs)
    os.makedirs(outdir, exist_ok=True)
    for name in ("train", "dev", "test"):
        with open(os.path.join(outdir, f"{name}.txt"), "w", encoding="utf-8") as fh:
            write_conll(getattr(ds, name), fh)
    return ds


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("outdir")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train", type=int, default=200)
    p.add_argument("--dev", type=int, default=50)
    p.add_argument("--test", type=int, default=100)
    a = p.parse_args(argv)
    write_toy(a.outdir, n_train=a.train, n_dev=a.dev, n_test=a.test, seed=a.seed)


if __name__ == "__main__":
    main()
