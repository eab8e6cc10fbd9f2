"""Selective scan with hand-written adjoints.

scan_forward projects the input into per-step (delta, b, c) selectivity
values, runs the recurrence kernel, and returns the activations needed for
the reverse pass. scan_backward consumes them and returns gradients for the
input and every layer parameter, as a params-shaped structure.
"""

from __future__ import annotations

import numpy as np

from ..errors import NumericError
from . import backend
from .params import ScanActivations, SsmLayerParams


def check_finite_steps(x: np.ndarray, what: str) -> None:
    """Raise NumericError naming the first step with a non-finite value."""
    finite = np.isfinite(x)
    if not finite.all():
        step = int(np.flatnonzero(~finite.all(axis=tuple(range(1, x.ndim))))[0])
        raise NumericError(f"non-finite {what} at step {step}")


def selectivity(params: SsmLayerParams, x: np.ndarray):
    """Per-step step sizes and couplings: delta [L, D], bsel and csel [L, P]."""
    s = x @ params.w_delta.T + params.b_delta
    delta = np.logaddexp(x.dtype.type(0), s)  # softplus, overflow-safe
    bsel = x @ params.w_b.T
    csel = x @ params.w_c.T
    return delta, bsel, csel


def scan_forward(
    params: SsmLayerParams,
    x: np.ndarray,
    want_cache: bool = True,
    backend_name: str | None = None,
) -> tuple[np.ndarray, ScanActivations | None]:
    """Run the scan over x [L, D_in]; returns (y [L, D_in], activations)."""
    x = np.ascontiguousarray(x)
    if x.ndim != 2:
        raise ValueError(f"scan input must be [L, D_in], got shape {x.shape}")
    if x.shape[0] < 1:
        raise ValueError("scan input must have at least one step")
    if x.shape[1] != params.d_in:
        raise ValueError(f"scan input has {x.shape[1]} channels, layer expects {params.d_in}")
    check_finite_steps(x, "input to scan")

    dt = x.dtype
    delta, bsel, csel = selectivity(params, x)
    a = np.ascontiguousarray(-np.exp(params.a_log), dtype=dt)
    kern = backend.kernels(backend_name)
    y, hidden = kern.recurrence_forward(
        a, delta, bsel, csel, x, np.ascontiguousarray(params.d_skip, dtype=dt), want_cache
    )
    cache = ScanActivations(x, delta, bsel, csel, hidden) if want_cache else None
    return y, cache


def scan_backward(
    params: SsmLayerParams,
    cache: ScanActivations,
    dy: np.ndarray,
    backend_name: str | None = None,
) -> tuple[np.ndarray, SsmLayerParams]:
    """Adjoint of scan_forward; returns (dx, gradients shaped like params)."""
    dy = np.ascontiguousarray(dy, dtype=cache.x.dtype)
    if dy.shape != cache.x.shape:
        raise ValueError(
            f"output gradient shape {dy.shape} does not match cached input shape {cache.x.shape}"
        )
    dt = cache.x.dtype
    a = np.ascontiguousarray(-np.exp(params.a_log), dtype=dt)
    kern = backend.kernels(backend_name)
    dx, ddelta, dbsel, dcsel, da, dd_skip = kern.recurrence_backward(
        a,
        cache.delta,
        cache.bsel,
        cache.csel,
        cache.x,
        np.ascontiguousarray(params.d_skip, dtype=dt),
        cache.hidden,
        dy,
    )
    # softplus adjoint: with delta = softplus(s), sigmoid(s) = 1 - exp(-delta)
    ds = ddelta * (-np.expm1(-cache.delta))
    grads = SsmLayerParams(
        a_log=da * a,  # a = -exp(a_log), so da/da_log = a
        w_delta=ds.T @ cache.x,
        b_delta=ds.sum(axis=0),
        w_b=dbsel.T @ cache.x,
        w_c=dcsel.T @ cache.x,
        d_skip=dd_skip,
    )
    dx = dx + ds @ params.w_delta + dbsel @ params.w_b + dcsel @ params.w_c
    return dx, grads
