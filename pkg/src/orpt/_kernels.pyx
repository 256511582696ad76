# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: fused LSTM cell pointwise passes and the causal conv."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef extern from "_lstm_kernels.h" nogil:
    void lstm_fwd_f32(float *a, const float *c_prev, float *c, float *h, float *tc,
                      Py_ssize_t B, Py_ssize_t M)
    void lstm_fwd_f64(double *a, const double *c_prev, double *c, double *h, double *tc,
                      Py_ssize_t B, Py_ssize_t M)
    void lstm_bwd_f32(const float *dh, const float *dc, const float *gates,
                      const float *c_prev, const float *tc, float *da, float *dcp,
                      Py_ssize_t B, Py_ssize_t M)
    void lstm_bwd_f64(const double *dh, const double *dc, const double *gates,
                      const double *c_prev, const double *tc, double *da, double *dcp,
                      Py_ssize_t B, Py_ssize_t M)


ctypedef fused real:
    float
    double


def lstm_forward_pointwise(real[:, ::1] a, real[:, ::1] c_prev):
    """Activate gate pre-activations ``a`` (B, 4M) in place; return ``(c, h, tanh_c)``."""
    cdef Py_ssize_t B = c_prev.shape[0], M = c_prev.shape[1]
    if a.shape[0] != B or a.shape[1] != 4 * M:
        raise ValueError("gate array must be (B, 4M)")
    dtype = np.float32 if real is float else np.float64
    c_arr = np.empty((B, M), dtype=dtype)
    h_arr = np.empty((B, M), dtype=dtype)
    t_arr = np.empty((B, M), dtype=dtype)
    cdef real[:, ::1] c = c_arr
    cdef real[:, ::1] h = h_arr
    cdef real[:, ::1] tc = t_arr
    if B == 0:
        return c_arr, h_arr, t_arr
    with nogil:
        if real is float:
            lstm_fwd_f32(&a[0, 0], &c_prev[0, 0], &c[0, 0], &h[0, 0], &tc[0, 0], B, M)
        else:
            lstm_fwd_f64(&a[0, 0], &c_prev[0, 0], &c[0, 0], &h[0, 0], &tc[0, 0], B, M)
    return c_arr, h_arr, t_arr


def lstm_backward_pointwise(real[:, ::1] dh, real[:, ::1] dc, real[:, ::1] gates,
                            real[:, ::1] c_prev, real[:, ::1] tanh_c):
    """Return ``(d pre-activations, d c_prev)``."""
    cdef Py_ssize_t B = c_prev.shape[0], M = c_prev.shape[1]
    if gates.shape[0] != B or gates.shape[1] != 4 * M:
        raise ValueError("gate array must be (B, 4M)")
    dtype = np.float32 if real is float else np.float64
    da_arr = np.empty((B, 4 * M), dtype=dtype)
    dcp_arr = np.empty((B, M), dtype=dtype)
    cdef real[:, ::1] da = da_arr
    cdef real[:, ::1] dcp = dcp_arr
    if B == 0:
        return da_arr, dcp_arr
    with nogil:
        if real is float:
            lstm_bwd_f32(&dh[0, 0], &dc[0, 0], &gates[0, 0], &c_prev[0, 0],
                         &tanh_c[0, 0], &da[0, 0], &dcp[0, 0], B, M)
        else:
            lstm_bwd_f64(&dh[0, 0], &dc[0, 0], &gates[0, 0], &c_prev[0, 0],
                         &tanh_c[0, 0], &da[0, 0], &dcp[0, 0], B, M)
    return da_arr, dcp_arr


def dilated_causal_conv(x, taps, Py_ssize_t dilation):
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] fv = np.ascontiguousarray(taps, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], L = fv.shape[0], k, i, j
    out_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double acc
    with nogil:
        for k in range(n):
            acc = 0
            for i in range(L):
                j = k - dilation * i
                if j < 0:
                    break
                acc = acc + fv[i] * xv[j]
            out[k] = acc
    return out_arr
