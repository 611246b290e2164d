# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the numpy kernels in reference.py.

Same contracts, same math, float64 only; see reference.py for docs.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, exp, expm1, rint, sin

cnp.import_array()

cdef double M_PI = 3.141592653589793238462643383279502884

DEF SINC_TAPS = 33
DEF HALF = 16


cdef inline double _sinc(double t) nogil:
    if t == 0.0:
        return 1.0
    return sin(M_PI * t) / (M_PI * t)


def place_taps(double[::1] out, double[::1] delays, double[::1] amps):
    cdef Py_ssize_t m = delays.shape[0]
    cdef Py_ssize_t length = out.shape[0]
    cdef Py_ssize_t i, j
    cdef long long base, idx
    cdef double tau, amp, t, w
    with nogil:
        for i in range(m):
            tau = delays[i]
            amp = amps[i]
            base = <long long>rint(tau)
            for j in range(-HALF, HALF + 1):
                idx = base + j
                if idx < 0 or idx >= length:
                    continue
                t = <double>idx - tau
                w = 0.5 * (1.0 + cos(2.0 * M_PI * t / SINC_TAPS))
                out[idx] += amp * _sinc(t) * w


def selective_scan_fwd(double[:, :, ::1] u, double[:, :, ::1] delta,
                       double[:, ::1] A, double[:, :, ::1] B,
                       double[:, :, ::1] C, bint exact_discretization=False):
    cdef Py_ssize_t nb = u.shape[0], T = u.shape[1], d = u.shape[2]
    cdef Py_ssize_t n = A.shape[1]
    y_arr = np.zeros((nb, T, d), dtype=np.float64)
    hs_arr = np.zeros((nb, T, d, n), dtype=np.float64)
    cdef double[:, :, ::1] y = y_arr
    cdef double[:, :, :, ::1] hs = hs_arr
    cdef Py_ssize_t b, t, i, j
    cdef double dt, ui, acc, dA_ij, abar, coef, h_prev
    with nogil:
        for b in range(nb):
            for t in range(T):
                for i in range(d):
                    dt = delta[b, t, i]
                    ui = u[b, t, i]
                    acc = 0.0
                    for j in range(n):
                        dA_ij = dt * A[i, j]
                        abar = exp(dA_ij)
                        if exact_discretization:
                            coef = expm1(dA_ij) / A[i, j]
                        else:
                            coef = dt
                        h_prev = hs[b, t - 1, i, j] if t > 0 else 0.0
                        hs[b, t, i, j] = abar * h_prev + coef * B[b, t, j] * ui
                        acc += hs[b, t, i, j] * C[b, t, j]
                    y[b, t, i] = acc
    return y_arr, hs_arr


def selective_scan_bwd(double[:, :, ::1] dy, double[:, :, ::1] u,
                       double[:, :, ::1] delta, double[:, ::1] A,
                       double[:, :, ::1] B, double[:, :, ::1] C,
                       double[:, :, :, ::1] hs, bint exact_discretization=False):
    cdef Py_ssize_t nb = u.shape[0], T = u.shape[1], d = u.shape[2]
    cdef Py_ssize_t n = A.shape[1]
    du_arr = np.zeros((nb, T, d), dtype=np.float64)
    ddelta_arr = np.zeros((nb, T, d), dtype=np.float64)
    dA_arr = np.zeros((d, n), dtype=np.float64)
    dB_arr = np.zeros((nb, T, n), dtype=np.float64)
    dC_arr = np.zeros((nb, T, n), dtype=np.float64)
    g_arr = np.zeros((nb, d, n), dtype=np.float64)
    cdef double[:, :, ::1] du = du_arr, ddelta = ddelta_arr
    cdef double[:, ::1] dA = dA_arr
    cdef double[:, :, ::1] dB = dB_arr, dC = dC_arr
    cdef double[:, :, ::1] g = g_arr
    cdef Py_ssize_t b, t, i, j
    cdef double dt, ui, dyi, dA_ij, abar, coef, dcoef_dd, dcoef_dA
    cdef double h_prev, bu, gi, dd_acc, du_acc
    with nogil:
        for b in range(nb):
            for t in range(T - 1, -1, -1):
                for i in range(d):
                    dt = delta[b, t, i]
                    ui = u[b, t, i]
                    dyi = dy[b, t, i]
                    dd_acc = 0.0
                    du_acc = 0.0
                    for j in range(n):
                        dC[b, t, j] += hs[b, t, i, j] * dyi
                        gi = g[b, i, j] + dyi * C[b, t, j]
                        h_prev = hs[b, t - 1, i, j] if t > 0 else 0.0
                        dA_ij = dt * A[i, j]
                        abar = exp(dA_ij)
                        bu = B[b, t, j] * ui
                        if exact_discretization:
                            coef = expm1(dA_ij) / A[i, j]
                            dcoef_dd = abar
                            dcoef_dA = (dt * abar - coef) / A[i, j]
                        else:
                            coef = dt
                            dcoef_dd = 1.0
                            dcoef_dA = 0.0
                        dd_acc += gi * h_prev * abar * A[i, j] + gi * bu * dcoef_dd
                        dA[i, j] += gi * h_prev * abar * dt + gi * bu * dcoef_dA
                        dB[b, t, j] += gi * coef * ui
                        du_acc += gi * coef * B[b, t, j]
                        g[b, i, j] = gi * abar
                    ddelta[b, t, i] = dd_acc
                    du[b, t, i] = du_acc
    return du_arr, ddelta_arr, dA_arr, dB_arr, dC_arr
