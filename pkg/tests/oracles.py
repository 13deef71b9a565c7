"""Independent reference implementations used by the tests.

These are deliberately naive: enumeration instead of dynamic programming,
explicit substring loops instead of the library's counter, and central
finite differences instead of hand-written backward passes.
"""
from __future__ import annotations

import itertools
import math
from collections import Counter

import numpy as np


# -- CRF ------------------------------------------------------------------

def brute_path_score(em, tags, trans):
    L = em.shape[1]
    # strictly left to right in definition order, so equal paths give bit-equal sums
    terms = [trans[L, tags[0]], em[0, tags[0]]]
    for t in range(1, len(tags)):
        terms += [trans[tags[t - 1], tags[t]], em[t, tags[t]]]
    terms.append(trans[tags[-1], L + 1])
    s = terms[0]
    for x in terms[1:]:
        s = s + x
    return s


def brute_crf(em, trans):
    """Return (logZ, best score, best path) by enumerating every path."""
    T, L = em.shape
    scores = []
    paths = list(itertools.product(range(L), repeat=T))
    for path in paths:
        scores.append(brute_path_score(em, path, trans))
    scores = np.array(scores)
    m = scores.max()
    log_z = m + math.log(np.exp(scores - m).sum())
    # itertools.product is lexicographic, so argmax returns the lowest-index tie
    best = int(np.argmax(scores))
    return log_z, scores[best], paths[best]


# -- n-grams and splitting ------------------------------------------------

def brute_ngram_counts(words, max_n):
    """Count every substring of length 2..max_n of every token occurrence."""
    counts = Counter()
    for w in words:
        for n in range(2, max_n + 1):
            for i in range(len(w) - n + 1):
                counts[w[i:i + n]] += 1
    return dict(counts)


def check_merge_trace(word, stats, k, trace):
    """Replay a merge trace, asserting each choice was the leftmost maximum."""
    pieces = list(word)
    for m, cands in trace:
        expected = [stats[pieces[i] + pieces[i + 1]] for i in range(len(pieces) - 1)]
        if list(cands) != expected:
            return False
        best = max(expected)
        if expected[m] != best or any(c == best for c in expected[:m]):
            return False
        pieces[m:m + 2] = [pieces[m] + pieces[m + 1]]
    return len(pieces) == min(k, len(word))


# -- finite differences ---------------------------------------------------

def numeric_grad(f, x, h=1e-5):
    """Central differences of scalar ``f()`` w.r.t. every entry of ``x`` (in place)."""
    g = np.zeros_like(x, dtype=np.float64)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for j in range(flat.size):
        old = flat[j]
        flat[j] = old + h
        fp = f()
        flat[j] = old - h
        fm = f()
        flat[j] = old
        gflat[j] = (fp - fm) / (2 * h)
    return g


def rel_error(analytic, numeric, floor=1e-6):
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    den = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / den)) if a.size else 0.0
