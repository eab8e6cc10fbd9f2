"""Parameters and discretization for the selective state-space layer.

The layer keeps one diagonal continuous-time system per (channel, state)
pair: h'(t) = a h(t) + b x(t), y = c h(t). Step size delta and the input
and output couplings b, c are produced from the input at every step
(selectivity); the diagonal a is a learned constant, stored as a_log with
a = -exp(a_log) so the system stays strictly decaying.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Below this |delta * a| the exact input coupling (exp(delta a) - 1)/a is
# dominated by cancellation; switch to its series.
SERIES_THRESHOLD = 1e-6


@dataclass
class SsmLayerParams:
    a_log: np.ndarray  # [D, P]  log of decay magnitudes, a = -exp(a_log)
    w_delta: np.ndarray  # [D, D] step-size projection
    b_delta: np.ndarray  # [D]    step-size bias (sets the initial time scale)
    w_b: np.ndarray  # [P, D]  input-coupling projection
    w_c: np.ndarray  # [P, D]  output-coupling projection
    d_skip: np.ndarray  # [D]   direct input-to-output path

    @property
    def d_in(self) -> int:
        return self.a_log.shape[0]

    @property
    def state_size(self) -> int:
        return self.a_log.shape[1]


@dataclass
class ScanActivations:
    """Everything scan_backward needs: per-step selectivity values and states."""

    x: np.ndarray  # [L, D]
    delta: np.ndarray  # [L, D]
    bsel: np.ndarray  # [L, P]
    csel: np.ndarray  # [L, P]
    hidden: np.ndarray  # [L, D, P]

    def __len__(self) -> int:
        return self.x.shape[0]


def init_ssm_params(
    d_in: int,
    state_size: int,
    rng: np.random.Generator,
    dtype=np.float32,
    delta_range: tuple[float, float] = (0.01, 0.1),
) -> SsmLayerParams:
    """Initialize a layer with log-spaced decay rates and a seeded time scale.

    b_delta is set so that softplus(b_delta) lands log-uniformly in
    delta_range, giving each channel its own initial step size.
    """
    scale = 1.0 / np.sqrt(d_in)
    a_log = np.tile(np.log(np.arange(1, state_size + 1, dtype=np.float64)), (d_in, 1))
    lo, hi = np.log(delta_range[0]), np.log(delta_range[1])
    delta0 = np.exp(rng.uniform(lo, hi, size=d_in))
    b_delta = delta0 + np.log(-np.expm1(-delta0))  # inverse softplus: log(expm1(x))
    return SsmLayerParams(
        a_log=a_log.astype(dtype),
        w_delta=(rng.standard_normal((d_in, d_in)) * scale).astype(dtype),
        b_delta=b_delta.astype(dtype),
        w_b=(rng.standard_normal((state_size, d_in)) * scale).astype(dtype),
        w_c=(rng.standard_normal((state_size, d_in)) * scale).astype(dtype),
        d_skip=np.ones(d_in, dtype=dtype),
    )


def zeros_like_ssm(params: SsmLayerParams) -> SsmLayerParams:
    return SsmLayerParams(
        a_log=np.zeros_like(params.a_log),
        w_delta=np.zeros_like(params.w_delta),
        b_delta=np.zeros_like(params.b_delta),
        w_b=np.zeros_like(params.w_b),
        w_c=np.zeros_like(params.w_c),
        d_skip=np.zeros_like(params.d_skip),
    )


def discretize(a, b, delta):
    """Zero-order-hold discretization of one diagonal element.

    a_bar = exp(delta a); b_bar = ((exp(delta a) - 1) / a) b. Near delta*a = 0
    (including a = 0 exactly, a removable singularity) the coupling uses its
    series delta*b*(1 + delta*a/2). Applies elementwise to arrays; scalars in,
    scalars out.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    if np.any(delta <= 0):
        raise ValueError("step size delta must be positive")
    da = delta * a
    a_bar = np.exp(da)
    small = np.abs(da) < SERIES_THRESHOLD
    safe_a = np.where(small, 1.0, a)
    b_bar = np.where(small, delta * b * (1.0 + da / 2.0), (a_bar - 1.0) / safe_a * b)
    if a_bar.ndim == 0:
        return float(a_bar), float(b_bar)
    return a_bar, b_bar


def input_coupling(a: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """(exp(delta a) - 1)/a with the series branch, broadcast to [L, D, P].

    a is [D, P], delta is [L, D]; this is b_bar without the b factor.
    """
    da = delta[:, :, None] * a[None, :, :]
    small = np.abs(da) < SERIES_THRESHOLD
    safe_a = np.where(small, 1.0, a[None, :, :])
    exact = (np.exp(da) - 1.0) / safe_a
    series = delta[:, :, None] * (1.0 + da / 2.0)
    return np.where(small, series, exact)


def input_coupling_da(a: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """d/da of (exp(delta a) - 1)/a, broadcast like input_coupling.

    Exact form (da*exp(da) - exp(da) + 1)/a^2 cancels catastrophically for
    small |da|, so the series delta^2*(1/2 + da/3 + da^2/8) takes over below
    1e-3 (truncation there is ~1e-14 relative, far below the cancellation
    error of the exact form).
    """
    da = delta[:, :, None] * a[None, :, :]
    small = np.abs(da) < 1e-3
    safe_a = np.where(small, 1.0, a[None, :, :])
    e = np.exp(da)
    exact = (da * e - e + 1.0) / (safe_a * safe_a)
    d2 = delta[:, :, None] ** 2
    series = d2 * (0.5 + da / 3.0 + da * da / 8.0)
    return np.where(small, series, exact)
