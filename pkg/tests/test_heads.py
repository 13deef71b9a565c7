import itertools
import math

import numpy as np
import pytest

from chardense import heads

from oracles import brute_crf, brute_path_score


def _instance(rng):
    T, L = int(rng.integers(1, 7)), int(rng.integers(1, 5))
    return rng.uniform(-2, 2, (T, L)), rng.uniform(-2, 2, (L + 2, L + 2))


def test_logsumexp_stable():
    a = np.array([1000.0, 1000.0])
    assert heads.logsumexp(a) == pytest.approx(1000 + math.log(2))
    assert heads.logsumexp(np.array([-np.inf, -np.inf])) == -np.inf


def test_softmax_nll_hand_computed():
    scores = np.array([[0.0, math.log(3.0)]])
    loss, grad = heads.softmax_nll(scores, np.array([1]))
    assert loss == pytest.approx(-math.log(0.75))
    assert np.allclose(grad, [[0.25, -0.25]])


def test_softmax_mask_excludes_padding():
    scores = np.random.default_rng(0).normal(size=(1, 3, 4))
    mask = np.array([[1.0, 1.0, 0.0]])
    loss, grad = heads.softmax_nll(scores, np.array([[0, 1, 2]]), mask)
    ref, _ = heads.softmax_nll(scores[:, :2], np.array([[0, 1]]))
    assert loss == pytest.approx(ref)
    assert not grad[0, 2].any()


def test_path_score_matches_definition():
    rng = np.random.default_rng(1)
    em, tr = _instance(rng)
    tags = rng.integers(em.shape[1], size=em.shape[0])
    assert heads.crf_path_score(em, tags, tr) == brute_path_score(em, tags, tr)


def test_crf_forward_and_viterbi_vs_brute_force():
    rng = np.random.default_rng(2)
    for _ in range(50):
        em, tr = _instance(rng)
        log_z, best, path = brute_crf(em, tr)
        assert abs(heads.crf_log_norm(em, tr) - log_z) < 1e-8
        vpath, vscore = heads.viterbi_decode(em, tr)
        assert vscore == best
        assert tuple(vpath) == path


def test_likelihoods_normalize():
    rng = np.random.default_rng(3)
    em, tr = rng.normal(size=(3, 3)), rng.normal(size=(5, 5))
    total = sum(math.exp(heads.crf_log_likelihood(em, p, tr)) for p in itertools.product(range(3), repeat=3))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_viterbi_tie_breaks_to_lowest_index():
    em = np.zeros((3, 3))
    tr = np.zeros((5, 5))
    path, score = heads.viterbi_decode(em, tr)
    assert path.tolist() == [0, 0, 0]
    assert score == 0.0


def test_crf_shape_error():
    with pytest.raises(ValueError, match="shape mismatch"):
        heads.crf_log_norm(np.zeros((2, 3)), np.zeros((4, 4)))
