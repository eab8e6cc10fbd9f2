"""Pure-numpy recurrence kernels; fallback when the compiled extension is absent.

Only the stepwise state update lives here. Selectivity projections are
vectorized outside the kernel, so forward and backward receive ready-made
per-step delta, b, c arrays and return gradients with respect to them.
"""

from __future__ import annotations

import numpy as np

from .params import input_coupling, input_coupling_da


def recurrence_forward(a, delta, bsel, csel, x, d_skip, want_hidden):
    """Run h_t = a_bar_t * h_{t-1} + b_bar_t x_t, y_t = h_t . c_t + d_skip * x_t.

    a: [D, P]; delta, x: [L, D]; bsel, csel: [L, P]; d_skip: [D].
    Returns (y [L, D], hidden [L, D, P] or None).
    """
    L, d_in = x.shape
    a_bar = np.exp(delta[:, :, None] * a[None, :, :])
    coup = input_coupling(a, delta).astype(x.dtype, copy=False)
    a_bar = a_bar.astype(x.dtype, copy=False)
    h = np.zeros(a.shape, dtype=x.dtype)
    y = np.empty_like(x)
    hidden = np.empty((L,) + a.shape, dtype=x.dtype) if want_hidden else None
    for t in range(L):
        h = a_bar[t] * h + (coup[t] * bsel[t][None, :]) * x[t][:, None]
        if want_hidden:
            hidden[t] = h
        y[t] = h @ csel[t] + d_skip * x[t]
    return y, hidden


def recurrence_backward(a, delta, bsel, csel, x, d_skip, hidden, dy):
    """Adjoint of recurrence_forward.

    Walks time in reverse carrying lam = dL/dh_t; after consuming step t the
    carry is scaled by a_bar_t to become the downstream part of dL/dh_{t-1}.
    Returns (dx, ddelta, dbsel, dcsel, da, dd_skip).
    """
    L, d_in = x.shape
    a_bar = np.exp(delta[:, :, None] * a[None, :, :]).astype(x.dtype, copy=False)
    coup = input_coupling(a, delta).astype(x.dtype, copy=False)
    coup_da = input_coupling_da(a, delta).astype(x.dtype, copy=False)

    lam = np.zeros(a.shape, dtype=x.dtype)
    dx = dy * d_skip[None, :]
    dd_skip = (dy * x).sum(axis=0)
    da = np.zeros(a.shape, dtype=x.dtype)
    ddelta = np.empty_like(delta)
    dbsel = np.empty_like(bsel)
    dcsel = np.empty_like(csel)

    for t in range(L - 1, -1, -1):
        lam += dy[t][:, None] * csel[t][None, :]
        dcsel[t] = dy[t] @ hidden[t]
        h_prev = hidden[t - 1] if t > 0 else 0.0
        d_a_bar = lam * h_prev
        d_g = lam * x[t][:, None]  # g = coup * bsel, the full input gain
        dx[t] += (lam * coup[t]) @ bsel[t]
        dbsel[t] = (d_g * coup[t]).sum(axis=0)
        d_coup = d_g * bsel[t][None, :]
        ddelta[t] = (d_a_bar * a * a_bar[t] + d_coup * a_bar[t]).sum(axis=1)
        da += d_a_bar * delta[t][:, None] * a_bar[t] + d_coup * coup_da[t]
        lam *= a_bar[t]
    return dx, ddelta, dbsel, dcsel, da, dd_skip
