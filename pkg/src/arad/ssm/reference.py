"""Literal single-step unrolling of the scan; the correctness oracle.

Everything here is deliberately scalar: python loops over (step, channel,
state), math.exp, no shared vectorized helpers. Slow and obvious on purpose
so that scan_forward has an independent implementation to be checked against.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import NumericError
from .params import SERIES_THRESHOLD, SsmLayerParams


def _softplus(s: float) -> float:
    if s > 30.0:
        return s
    return math.log1p(math.exp(s))


def naive_unroll(params: SsmLayerParams, x: np.ndarray) -> np.ndarray:
    """Run the recurrence one scalar at a time; returns y [L, D_in] in float64."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.d_in:
        raise ValueError(f"input shape {x.shape} does not match layer with D_in={params.d_in}")
    for t in range(x.shape[0]):
        for v in x[t]:
            if not math.isfinite(v):
                raise NumericError(f"non-finite input to scan at step {t}")

    L, D = x.shape
    P = params.state_size
    a = [[-math.exp(float(params.a_log[d, p])) for p in range(P)] for d in range(D)]
    w_delta = params.w_delta.astype(np.float64).tolist()
    b_delta = params.b_delta.astype(np.float64).tolist()
    w_b = params.w_b.astype(np.float64).tolist()
    w_c = params.w_c.astype(np.float64).tolist()
    d_skip = params.d_skip.astype(np.float64).tolist()

    h = [[0.0] * P for _ in range(D)]
    y = np.zeros((L, D), dtype=np.float64)
    for t in range(L):
        xt = [float(v) for v in x[t]]
        delta_t = []
        for d in range(D):
            s = b_delta[d]
            for j in range(D):
                s += w_delta[d][j] * xt[j]
            delta_t.append(_softplus(s))
        bsel_t = []
        csel_t = []
        for p in range(P):
            sb = 0.0
            sc = 0.0
            for j in range(D):
                sb += w_b[p][j] * xt[j]
                sc += w_c[p][j] * xt[j]
            bsel_t.append(sb)
            csel_t.append(sc)
        for d in range(D):
            dt = delta_t[d]
            for p in range(P):
                da = dt * a[d][p]
                a_bar = math.exp(da)
                if abs(da) < SERIES_THRESHOLD:
                    b_bar = dt * bsel_t[p] * (1.0 + da / 2.0)
                else:
                    b_bar = (a_bar - 1.0) / a[d][p] * bsel_t[p]
                h[d][p] = a_bar * h[d][p] + b_bar * xt[d]
            out = 0.0
            for p in range(P):
                out += h[d][p] * csel_t[p]
            y[t, d] = out + d_skip[d] * xt[d]
    return y
