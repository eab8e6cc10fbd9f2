"""Gated state-space blocks and the offset sequence predictor.

A block is: RMS pre-norm, a width-doubling input projection split into a
scanned branch and a gate, a depthwise causal convolution and SiLU on the
scanned branch, the selective scan, SiLU-gated recombination, and an output
projection added back to the residual stream.

The predictor stacks blocks over [start_1..start_M, v_1..v_L]: output
position p (0-based) is trained to produce v_{p+1} for p < L and the p-L+1'th
end-marker row for p >= L. Because the scan is causal, the prediction for
v_l can only see v_1..v_{l-M}: an offset of M positions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError
from .ssm import (
    ScanActivations,
    SsmLayerParams,
    init_ssm_params,
    scan_backward,
    scan_forward,
    zeros_like_ssm,
)

RMSNORM_EPS = 1e-6


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def silu(x: np.ndarray) -> np.ndarray:
    return x * sigmoid(x)


def silu_grad(x: np.ndarray) -> np.ndarray:
    s = sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


@dataclass
class MambaBlockParams:
    norm_scale: np.ndarray  # [C]
    in_proj_w: np.ndarray  # [2*E*C, C]
    in_proj_b: np.ndarray  # [2*E*C]
    conv_w: np.ndarray  # [E*C, K] depthwise, taps ordered oldest..current
    conv_b: np.ndarray  # [E*C]
    ssm: SsmLayerParams  # D_in = E*C
    out_proj_w: np.ndarray  # [C, E*C]
    out_proj_b: np.ndarray  # [C]

    @property
    def width(self) -> int:
        return self.norm_scale.shape[0]

    @property
    def inner(self) -> int:
        return self.conv_w.shape[0]


@dataclass
class BlockCache:
    u: np.ndarray
    inv_rms: np.ndarray  # [L, 1]
    v: np.ndarray
    x0: np.ndarray  # scanned branch before conv
    xc: np.ndarray  # after conv, before silu
    z: np.ndarray  # gate branch
    y: np.ndarray  # scan output
    scan: ScanActivations


@dataclass
class PredictorParams:
    blocks: list[MambaBlockParams]
    head_w: np.ndarray  # [C, C]
    head_b: np.ndarray  # [C]
    start: np.ndarray  # [M_max, C] learnable rows prepended as context
    end: np.ndarray  # [M_max, C] learnable targets for the trailing positions

    @property
    def width(self) -> int:
        return self.head_w.shape[0]

    @property
    def max_offset(self) -> int:
        return self.start.shape[0]


@dataclass
class PredictorCache:
    offset: int
    blocks: list[BlockCache]
    final: np.ndarray  # input to the head


def init_block_params(
    width: int,
    expand: int,
    d_conv: int,
    state_size: int,
    rng: np.random.Generator,
    dtype=np.float32,
) -> MambaBlockParams:
    inner = expand * width
    return MambaBlockParams(
        norm_scale=np.ones(width, dtype=dtype),
        in_proj_w=(rng.standard_normal((2 * inner, width)) / np.sqrt(width)).astype(dtype),
        in_proj_b=np.zeros(2 * inner, dtype=dtype),
        conv_w=(rng.standard_normal((inner, d_conv)) / np.sqrt(d_conv)).astype(dtype),
        conv_b=np.zeros(inner, dtype=dtype),
        ssm=init_ssm_params(inner, state_size, rng, dtype=dtype),
        # zero output projection: each block starts as the identity map
        out_proj_w=np.zeros((width, inner), dtype=dtype),
        out_proj_b=np.zeros(width, dtype=dtype),
    )


def init_predictor_params(
    width: int,
    max_offset: int,
    n_layers: int,
    expand: int,
    d_conv: int,
    state_size: int,
    rng: np.random.Generator,
    dtype=np.float32,
) -> PredictorParams:
    blocks = [
        init_block_params(width, expand, d_conv, state_size, rng, dtype) for _ in range(n_layers)
    ]
    return PredictorParams(
        blocks=blocks,
        # identity head: the untrained model echoes the token M steps back
        head_w=np.eye(width, dtype=dtype),
        head_b=np.zeros(width, dtype=dtype),
        start=np.zeros((max_offset, width), dtype=dtype),
        end=np.zeros((max_offset, width), dtype=dtype),
    )


def zeros_like_block(p: MambaBlockParams) -> MambaBlockParams:
    return MambaBlockParams(
        norm_scale=np.zeros_like(p.norm_scale),
        in_proj_w=np.zeros_like(p.in_proj_w),
        in_proj_b=np.zeros_like(p.in_proj_b),
        conv_w=np.zeros_like(p.conv_w),
        conv_b=np.zeros_like(p.conv_b),
        ssm=zeros_like_ssm(p.ssm),
        out_proj_w=np.zeros_like(p.out_proj_w),
        out_proj_b=np.zeros_like(p.out_proj_b),
    )


def zeros_like_predictor(p: PredictorParams) -> PredictorParams:
    return PredictorParams(
        blocks=[zeros_like_block(b) for b in p.blocks],
        head_w=np.zeros_like(p.head_w),
        head_b=np.zeros_like(p.head_b),
        start=np.zeros_like(p.start),
        end=np.zeros_like(p.end),
    )


def _stage_finite(arr: np.ndarray, stage: str) -> None:
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite values after block stage {stage!r}")


def rmsnorm_forward(u: np.ndarray, scale: np.ndarray):
    inv_rms = 1.0 / np.sqrt(np.mean(u * u, axis=1, keepdims=True) + u.dtype.type(RMSNORM_EPS))
    return u * inv_rms * scale, inv_rms


def rmsnorm_backward(u, inv_rms, scale, dv):
    q = dv * scale
    c = u.shape[1]
    du = q * inv_rms - u * ((q * u).sum(axis=1, keepdims=True) * inv_rms**3 / c)
    dscale = (dv * u * inv_rms).sum(axis=0)
    return du, dscale


def causal_conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Depthwise convolution reading only current and past steps.

    out[t, d] = b[d] + sum_j w[d, j] * x[t - (K-1) + j, d], zero-padded history.
    """
    L = x.shape[0]
    k = w.shape[1]
    padded = np.vstack([np.zeros((k - 1, x.shape[1]), dtype=x.dtype), x])
    out = np.tile(b, (L, 1))
    for j in range(k):
        out += w[:, j] * padded[j : j + L]
    return out


def causal_conv_backward(x, w, dout):
    L = x.shape[0]
    k = w.shape[1]
    padded = np.vstack([np.zeros((k - 1, x.shape[1]), dtype=x.dtype), x])
    dw = np.empty_like(w)
    dpad = np.zeros_like(padded)
    for j in range(k):
        dw[:, j] = (dout * padded[j : j + L]).sum(axis=0)
        dpad[j : j + L] += w[:, j] * dout
    db = dout.sum(axis=0)
    return dpad[k - 1 :], dw, db


def block_forward(
    p: MambaBlockParams, u: np.ndarray, want_cache: bool = True
) -> tuple[np.ndarray, BlockCache | None]:
    inner = p.inner
    v, inv_rms = rmsnorm_forward(u, p.norm_scale)
    _stage_finite(v, "norm")
    pre = v @ p.in_proj_w.T + p.in_proj_b
    _stage_finite(pre, "in_proj")
    x0, z = pre[:, :inner], pre[:, inner:]
    xc = causal_conv_forward(x0, p.conv_w, p.conv_b)
    _stage_finite(xc, "conv")
    xs = silu(xc)
    y, scan_cache = scan_forward(p.ssm, xs, want_cache=want_cache)
    _stage_finite(y, "scan")
    g = y * silu(z)
    out = g @ p.out_proj_w.T + p.out_proj_b + u
    _stage_finite(out, "out_proj")
    cache = BlockCache(u, inv_rms, v, x0, xc, z, y, scan_cache) if want_cache else None
    return out, cache


def block_backward(
    p: MambaBlockParams, cache: BlockCache, dout: np.ndarray
) -> tuple[np.ndarray, MambaBlockParams]:
    g = cache.y * silu(cache.z)
    d_out_w = dout.T @ g
    d_out_b = dout.sum(axis=0)
    dg = dout @ p.out_proj_w
    dy = dg * silu(cache.z)
    dz = dg * cache.y * silu_grad(cache.z)
    dxs, ssm_grads = scan_backward(p.ssm, cache.scan, dy)
    dxc = dxs * silu_grad(cache.xc)
    dx0, d_conv_w, d_conv_b = causal_conv_backward(cache.x0, p.conv_w, dxc)
    dpre = np.hstack([dx0, dz])
    d_in_w = dpre.T @ cache.v
    d_in_b = dpre.sum(axis=0)
    dv = dpre @ p.in_proj_w
    du_norm, d_scale = rmsnorm_backward(cache.u, cache.inv_rms, p.norm_scale, dv)
    du = du_norm + dout  # residual path
    grads = MambaBlockParams(
        norm_scale=d_scale,
        in_proj_w=d_in_w,
        in_proj_b=d_in_b,
        conv_w=d_conv_w,
        conv_b=d_conv_b,
        ssm=ssm_grads,
        out_proj_w=d_out_w,
        out_proj_b=d_out_b,
    )
    return du, grads


def predictor_forward(
    p: PredictorParams, tokens: np.ndarray, offset: int, want_cache: bool = True
) -> tuple[np.ndarray, PredictorCache | None]:
    """Run the stack over [start rows, tokens]; returns all L+offset outputs.

    Rows 0..L-1 of the output are the token predictions (row l-1 predicts
    token l); rows L..L+offset-1 should reproduce the end markers.
    """
    L = tokens.shape[0]
    if offset < 1:
        raise ValueError(f"prediction offset must be >= 1, got {offset}")
    if offset > L:
        raise ValueError(
            f"prediction offset {offset} exceeds sequence length {L}: nothing to condition on"
        )
    if offset > p.max_offset:
        raise ValueError(
            f"prediction offset {offset} exceeds the predictor's maximum {p.max_offset}"
        )
    if tokens.shape[1] != p.width:
        raise ValueError(f"token width {tokens.shape[1]} does not match predictor width {p.width}")
    u = np.vstack([p.start[:offset], tokens])
    caches: list[BlockCache] = []
    for bp in p.blocks:
        u, c = block_forward(bp, u, want_cache=want_cache)
        if want_cache:
            caches.append(c)
    out = u @ p.head_w.T + p.head_b
    cache = PredictorCache(offset, caches, u) if want_cache else None
    return out, cache


def predictor_backward(
    p: PredictorParams, cache: PredictorCache, dout: np.ndarray
) -> tuple[np.ndarray, PredictorParams]:
    """Adjoint of predictor_forward; returns (dtokens, params-shaped grads).

    Gradients for the end markers stay zero here; they enter the objective as
    targets, not through this forward pass, so the caller owns that term.
    """
    grads = zeros_like_predictor(p)
    grads.head_w = dout.T @ cache.final
    grads.head_b = dout.sum(axis=0)
    du = dout @ p.head_w
    for i in range(len(p.blocks) - 1, -1, -1):
        du, grads.blocks[i] = block_backward(p.blocks[i], cache.blocks[i], du)
    grads.start[: cache.offset] = du[: cache.offset]
    dtokens = du[cache.offset :]
    return dtokens, grads


def predict_sequence(p: PredictorParams, tokens: np.ndarray, offset: int) -> np.ndarray:
    """Predicted tokens only: out[l] is the model's guess for tokens[l]."""
    out, _ = predictor_forward(p, tokens, offset, want_cache=False)
    return out[: tokens.shape[0]]
