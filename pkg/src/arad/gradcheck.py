"""Central-difference verification of hand-written gradients."""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np


def grad_check(
    f: Callable[[], float],
    params: Mapping[str, np.ndarray],
    analytic: Mapping[str, np.ndarray],
    epsilon: float = 1e-5,
) -> float:
    """Max relative disagreement between analytic gradients and finite differences.

    f is a zero-argument callable evaluating the scalar objective; it must read
    the arrays in `params`, which are perturbed in place one element at a time
    and restored. `analytic` maps the same names to precomputed gradients.
    Returns max over elements of |analytic - fd| / max(|analytic|, |fd|, 1e-8);
    never raises on disagreement, only reports it.
    """
    worst = 0.0
    for name, arr in params.items():
        grad = np.asarray(analytic[name])
        if grad.shape != arr.shape:
            raise ValueError(f"gradient shape {grad.shape} != parameter shape {arr.shape} for {name!r}")
        for idx in np.ndindex(arr.shape):
            original = arr[idx]
            arr[idx] = original + epsilon
            f_plus = f()
            arr[idx] = original - epsilon
            f_minus = f()
            arr[idx] = original
            fd = (f_plus - f_minus) / (2.0 * epsilon)
            g = float(grad[idx])
            rel = abs(g - fd) / max(abs(g), abs(fd), 1e-8)
            worst = max(worst, rel)
    return worst
