# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled recurrence kernels. Same contract and math as kernels_numpy."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs

cnp.import_array()

ctypedef fused real_t:
    float
    double

# Series switch points; keep in sync with params.SERIES_THRESHOLD and
# params.input_coupling_da.
cdef double COUP_SERIES = 1e-6
cdef double COUP_DA_SERIES = 1e-3


cdef inline double _coupling(double da, double dt, double a) noexcept nogil:
    if fabs(da) < COUP_SERIES:
        return dt * (1.0 + da / 2.0)
    return (exp(da) - 1.0) / a


cdef inline double _coupling_da(double da, double dt, double a) noexcept nogil:
    cdef double e
    if fabs(da) < COUP_DA_SERIES:
        return dt * dt * (0.5 + da / 3.0 + da * da / 8.0)
    e = exp(da)
    return (da * e - e + 1.0) / (a * a)


def recurrence_forward(real_t[:, ::1] a, real_t[:, ::1] delta, real_t[:, ::1] bsel,
                       real_t[:, ::1] csel, real_t[:, ::1] x, real_t[::1] d_skip,
                       bint want_hidden):
    cdef Py_ssize_t L = x.shape[0]
    cdef Py_ssize_t D = x.shape[1]
    cdef Py_ssize_t P = a.shape[1]
    dtype = np.float32 if real_t is float else np.float64

    y_arr = np.empty((L, D), dtype=dtype)
    h_arr = np.zeros((D, P), dtype=dtype)
    hidden_arr = np.empty((L, D, P), dtype=dtype) if want_hidden else None

    cdef real_t[:, ::1] y = y_arr
    cdef real_t[:, ::1] h = h_arr
    cdef real_t[:, :, ::1] hidden = hidden_arr if want_hidden else None

    cdef Py_ssize_t t, d, p
    cdef double xd, dt, da, e, acc, hnew

    with nogil:
        for t in range(L):
            for d in range(D):
                xd = x[t, d]
                dt = delta[t, d]
                acc = 0.0
                for p in range(P):
                    da = dt * a[d, p]
                    e = exp(da)
                    hnew = e * h[d, p] + _coupling(da, dt, a[d, p]) * bsel[t, p] * xd
                    h[d, p] = <real_t> hnew
                    if want_hidden:
                        hidden[t, d, p] = <real_t> hnew
                    acc += hnew * csel[t, p]
                y[t, d] = <real_t> (acc + d_skip[d] * xd)
    return y_arr, hidden_arr


def recurrence_backward(real_t[:, ::1] a, real_t[:, ::1] delta, real_t[:, ::1] bsel,
                        real_t[:, ::1] csel, real_t[:, ::1] x, real_t[::1] d_skip,
                        real_t[:, :, ::1] hidden, real_t[:, ::1] dy):
    cdef Py_ssize_t L = x.shape[0]
    cdef Py_ssize_t D = x.shape[1]
    cdef Py_ssize_t P = a.shape[1]
    dtype = np.float32 if real_t is float else np.float64

    dx_arr = np.empty((L, D), dtype=dtype)
    ddelta_arr = np.empty((L, D), dtype=dtype)
    dbsel_arr = np.zeros((L, P), dtype=dtype)
    dcsel_arr = np.zeros((L, P), dtype=dtype)
    da_arr = np.zeros((D, P), dtype=dtype)
    dd_skip_arr = np.zeros(D, dtype=dtype)
    lam_arr = np.zeros((D, P), dtype=dtype)

    cdef real_t[:, ::1] dx = dx_arr
    cdef real_t[:, ::1] ddelta = ddelta_arr
    cdef real_t[:, ::1] dbsel = dbsel_arr
    cdef real_t[:, ::1] dcsel = dcsel_arr
    cdef real_t[:, ::1] da_g = da_arr
    cdef real_t[::1] dd_skip = dd_skip_arr
    cdef real_t[:, ::1] lam = lam_arr

    cdef Py_ssize_t t, d, p
    cdef double xd, dyd, dt, da, e, coup, lam_dp, h_prev
    cdef double d_a_bar, d_g, d_coup, dx_acc, ddelta_acc

    with nogil:
        for t in range(L - 1, -1, -1):
            for d in range(D):
                xd = x[t, d]
                dyd = dy[t, d]
                dt = delta[t, d]
                dx_acc = 0.0
                ddelta_acc = 0.0
                for p in range(P):
                    da = dt * a[d, p]
                    e = exp(da)
                    coup = _coupling(da, dt, a[d, p])
                    lam_dp = lam[d, p] + dyd * csel[t, p]
                    dcsel[t, p] += <real_t> (dyd * hidden[t, d, p])
                    h_prev = hidden[t - 1, d, p] if t > 0 else 0.0
                    d_a_bar = lam_dp * h_prev
                    d_g = lam_dp * xd
                    dx_acc += lam_dp * coup * bsel[t, p]
                    dbsel[t, p] += <real_t> (d_g * coup)
                    d_coup = d_g * bsel[t, p]
                    ddelta_acc += d_a_bar * a[d, p] * e + d_coup * e
                    da_g[d, p] += <real_t> (d_a_bar * dt * e + d_coup * _coupling_da(da, dt, a[d, p]))
                    lam[d, p] = <real_t> (lam_dp * e)
                dx[t, d] = <real_t> (dyd * d_skip[d] + dx_acc)
                ddelta[t, d] = <real_t> ddelta_acc
                dd_skip[d] += <real_t> (dyd * xd)
    return dx_arr, ddelta_arr, dbsel_arr, dcsel_arr, da_arr, dd_skip_arr
