"""The finite-difference checker itself: catches wrong gradients, restores state."""

import numpy as np
import pytest

from arad.gradcheck import grad_check


def quadratic_setup():
    rng = np.random.default_rng(7)
    w = rng.standard_normal((4, 3))
    target = rng.standard_normal((4, 3))

    def f():
        return float(((w - target) ** 2).sum())

    grad = 2.0 * (w - target)
    return w, f, grad


def test_accepts_correct_gradient():
    w, f, grad = quadratic_setup()
    assert grad_check(f, {"w": w}, {"w": grad}, epsilon=1e-5) < 1e-7


def test_flags_corrupted_gradient():
    w, f, grad = quadratic_setup()
    assert grad_check(f, {"w": w}, {"w": grad * 1.1}, epsilon=1e-5) > 0.05


def test_flags_single_wrong_element():
    w, f, grad = quadratic_setup()
    bad = grad.copy()
    bad[2, 1] += 1.0
    assert grad_check(f, {"w": w}, {"w": bad}, epsilon=1e-5) > 0.05


def test_restores_parameters_bitwise():
    w, f, grad = quadratic_setup()
    before = w.copy()
    grad_check(f, {"w": w}, {"w": grad})
    assert np.array_equal(w, before)


def test_rejects_shape_mismatch():
    w, f, grad = quadratic_setup()
    with pytest.raises(ValueError, match="shape"):
        grad_check(f, {"w": w}, {"w": grad[:2]})
