"""Output heads: per-token softmax and a linear-chain CRF.

The CRF transition matrix has shape (L + 2, L + 2); index ``L`` is START and
``L + 1`` is STOP. A path score is::

    trans[START, y0] + e[0, y0] + sum_t (trans[y_{t-1}, y_t] + e[t, y_t]) + trans[y_T, STOP]
"""
from __future__ import annotations

import numpy as np


def logsumexp(a, axis=None, keepdims=False):
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return out if keepdims else np.squeeze(out, axis=axis)


def log_softmax(scores):
    return scores - logsumexp(scores, axis=-1, keepdims=True)


def softmax_nll(scores, gold, mask=None):
    """Mean token cross entropy and its gradient w.r.t. ``scores``.

    ``scores`` has shape (..., L); ``mask`` excludes padding tokens from both
    the mean and the gradient.
    """
    gold = np.asarray(gold)
    lsm = log_softmax(scores)
    picked = np.take_along_axis(lsm, gold[..., None], axis=-1)[..., 0]
    if mask is None:
        mask = np.ones(gold.shape, dtype=scores.dtype)
    n = mask.sum()
    loss = -(picked * mask).sum() / n
    grad = np.exp(lsm)
    np.put_along_axis(grad, gold[..., None], np.take_along_axis(grad, gold[..., None], axis=-1) - 1, axis=-1)
    grad *= (mask / n)[..., None]
    return float(loss), grad


def softmax_predict(scores):
    return np.argmax(scores, axis=-1)


def init_transitions(num_labels, dtype=np.float64):
    return np.zeros((num_labels + 2, num_labels + 2), dtype=dtype)


def _check(emissions, trans):
    T, L = emissions.shape
    if trans.shape != (L + 2, L + 2):
        raise ValueError(f"shape mismatch: emissions {emissions.shape} vs transitions {trans.shape}")
    return T, L


def crf_path_score(emissions, tags, trans):
    T, L = _check(emissions, trans)
    start, stop = L, L + 1
    s = trans[start, tags[0]] + emissions[0, tags[0]]
    for t in range(1, T):
        s = s + trans[tags[t - 1], tags[t]] + emissions[t, tags[t]]
    return s + trans[tags[-1], stop]


def _forward(emissions, trans):
    T, L = emissions.shape
    inner = trans[:L, :L]
    alpha = np.empty((T, L), dtype=emissions.dtype)
    alpha[0] = trans[L, :L] + emissions[0]
    for t in range(1, T):
        alpha[t] = logsumexp(alpha[t - 1][:, None] + inner, axis=0) + emissions[t]
    return alpha, logsumexp(alpha[-1] + trans[:L, L + 1])


def crf_log_norm(emissions, trans):
    _check(emissions, trans)
    return _forward(emissions, trans)[1]


def crf_log_likelihood(emissions, tags, trans, with_grad=False):
    """log p(tags | emissions); optionally also (d_emissions, d_transitions)."""
    T, L = _check(emissions, trans)
    tags = np.asarray(tags)
    alpha, log_z = _forward(emissions, trans)
    ll = crf_path_score(emissions, tags, trans) - log_z
    if not with_grad:
        return ll
    inner = trans[:L, :L]
    beta = np.empty_like(alpha)
    beta[-1] = trans[:L, L + 1]
    for t in range(T - 2, -1, -1):
        beta[t] = logsumexp(inner + (emissions[t + 1] + beta[t + 1])[None, :], axis=1)
    marg = np.exp(alpha + beta - log_z)
    d_em = -marg
    d_em[np.arange(T), tags] += 1
    d_tr = np.zeros_like(trans)
    d_tr[L, :L] = -marg[0]
    d_tr[L, tags[0]] += 1
    d_tr[:L, L + 1] = -marg[-1]
    d_tr[tags[-1], L + 1] += 1
    if T > 1:
        pair = alpha[:-1, :, None] + inner[None] + (emissions[1:] + beta[1:])[:, None, :] - log_z
        d_tr[:L, :L] -= np.exp(pair).sum(axis=0)
        np.add.at(d_tr, (tags[:-1], tags[1:]), 1)
    return ll, d_em, d_tr


def viterbi_decode(emissions, trans):
    """Exact best path and its score; ties go to the lower label index."""
    T, L = _check(emissions, trans)
    inner = trans[:L, :L]
    delta = trans[L, :L] + emissions[0]
    back = np.empty((T, L), dtype=np.int64)
    for t in range(1, T):
        cand = delta[:, None] + inner
        back[t] = np.argmax(cand, axis=0)
        delta = cand[back[t], np.arange(L)] + emissions[t]
    final = delta + trans[:L, L + 1]
    best = int(np.argmax(final))
    path = [best]
    for t in range(T - 1, 0, -1):
        best = int(back[t, best])
        path.append(best)
    path.reverse()
    return np.array(path, dtype=np.int64), float(final[path[-1]])
