"""Sequence predictor: offset alignment, bitwise causality, gradients, contracts."""

import numpy as np
import pytest

from arad.blocks import (
    init_predictor_params,
    predict_sequence,
    predictor_backward,
    predictor_forward,
)
from arad.gradcheck import grad_check
from arad.tensors import named_tensors

from conftest import perturb_tensors

WIDTH = 6


def fresh_predictor(rng, max_offset=4, n_layers=2, perturb=0.0):
    p = init_predictor_params(WIDTH, max_offset, n_layers, 2, 3, 3, rng, dtype=np.float64)
    if perturb:
        perturb_tensors(p, rng, perturb)
    return p


def test_untrained_predictor_echoes_offset_tokens(rng):
    # identity head over zero start rows: the guess for token l is token l-M
    p = fresh_predictor(rng)
    tokens = rng.standard_normal((10, WIDTH))
    for offset in (1, 3):
        out = predict_sequence(p, tokens, offset)
        assert out.shape == tokens.shape
        assert np.array_equal(out[:offset], np.zeros((offset, WIDTH)))
        assert np.array_equal(out[offset:], tokens[: len(tokens) - offset])


def test_output_covers_tokens_and_end_rows(rng):
    p = fresh_predictor(rng, perturb=0.1)
    tokens = rng.standard_normal((8, WIDTH))
    out, cache = predictor_forward(p, tokens, 3)
    assert out.shape == (8 + 3, WIDTH)
    assert cache.offset == 3


def test_prediction_is_bitwise_causal(rng):
    # output row l-1 (the guess for token l) may depend only on tokens up to
    # l-M; perturbing any later token must not change it in a single bit
    p = fresh_predictor(rng, perturb=0.2)
    for _ in range(20):
        L = int(rng.integers(6, 24))
        M = int(rng.integers(1, 5))
        tokens = rng.standard_normal((L, WIDTH))
        l = int(rng.integers(M + 1, L + 1))  # 1-based target position
        j = int(rng.integers(max(l - M + 1, 1), L + 1))  # any later token, 1-based
        base = predict_sequence(p, tokens, M)
        bumped = tokens.copy()
        bumped[j - 1] += 1000.0
        out = predict_sequence(p, bumped, M)
        assert np.array_equal(out[l - 1], base[l - 1]), (L, M, l, j)


def test_last_allowed_token_does_influence(rng):
    # sanity that the causality test bites: token l-M is inside the context
    p = fresh_predictor(rng, perturb=0.2)
    L, M, l = 12, 2, 9
    tokens = rng.standard_normal((L, WIDTH))
    base = predict_sequence(p, tokens, M)
    bumped = tokens.copy()
    bumped[(l - M) - 1] += 1.0
    out = predict_sequence(p, bumped, M)
    assert not np.array_equal(out[l - 1], base[l - 1])


def test_offset_contracts(rng):
    p = fresh_predictor(rng, max_offset=3)
    tokens = rng.standard_normal((5, WIDTH))
    with pytest.raises(ValueError, match="offset must be >= 1"):
        predictor_forward(p, tokens, 0)
    with pytest.raises(ValueError, match="exceeds sequence length"):
        predictor_forward(p, np.zeros((2, WIDTH)), 3)
    with pytest.raises(ValueError, match="exceeds the predictor's maximum"):
        predictor_forward(p, rng.standard_normal((9, WIDTH)), 4)
    with pytest.raises(ValueError, match="width"):
        predictor_forward(p, np.zeros((5, WIDTH + 1)), 2)


def test_backward_finite_difference(rng):
    p = fresh_predictor(rng, perturb=0.15)
    tokens = rng.standard_normal((9, WIDTH)) * 0.5
    r = rng.standard_normal((9 + 2, WIDTH))

    def f():
        out, _ = predictor_forward(p, tokens, 2, want_cache=False)
        return float((out * r).sum())

    out, cache = predictor_forward(p, tokens, 2)
    dtokens, grads = predictor_backward(p, cache, r)
    params = dict(named_tensors(p))
    params["tokens"] = tokens
    analytic = dict(named_tensors(grads))
    analytic["tokens"] = dtokens
    del params["end"], analytic["end"]  # targets, not inputs: no gradient here
    assert grad_check(f, params, analytic, epsilon=1e-5) < 1e-4


def test_backward_start_rows_beyond_offset_stay_zero(rng):
    p = fresh_predictor(rng, max_offset=4, perturb=0.1)
    tokens = rng.standard_normal((8, WIDTH))
    _, cache = predictor_forward(p, tokens, 2)
    _, grads = predictor_backward(p, cache, np.ones((10, WIDTH)))
    assert np.abs(grads.start[:2]).max() > 0
    assert not grads.start[2:].any()
    assert not grads.end.any()  # the loss owns the end-marker term
