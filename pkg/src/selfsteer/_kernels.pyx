# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. Signatures mirror :mod:`selfsteer._kernels_py`."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, floor, M_PI

cnp.import_array()


def das_powers(const double complex[:, :] frame, const double[:, :] tau,
               double df, Py_ssize_t k0, Py_ssize_t k1):
    """Band-averaged DAS output power for every row of ``tau``.

    ``tau`` is (n_azimuths, channels) in seconds, bins ``k0 <= k < k1`` sit at
    ``k * df`` Hz.  Steering phases are advanced by recurrence over k.
    """
    cdef Py_ssize_t n_az = tau.shape[0]
    cdef Py_ssize_t n_ch = tau.shape[1]
    cdef Py_ssize_t p, m, k
    cdef double[:] out = np.empty(n_az)
    cdef double[:, :] rot = np.empty((n_ch, 2))
    cdef double[:, :] ph = np.empty((n_ch, 2))
    cdef double phi, total, ar, ai, yr, yi, pr, pi_, tmp
    cdef double norm = <double>(n_ch * n_ch * (k1 - k0))
    for p in range(n_az):
        for m in range(n_ch):
            phi = 2.0 * M_PI * df * tau[p, m]
            rot[m, 0] = cos(phi)
            rot[m, 1] = sin(phi)
            ph[m, 0] = cos(phi * k0)
            ph[m, 1] = sin(phi * k0)
        total = 0.0
        for k in range(k0, k1):
            ar = 0.0
            ai = 0.0
            for m in range(n_ch):
                yr = frame[m, k].real
                yi = frame[m, k].imag
                pr = ph[m, 0]
                pi_ = ph[m, 1]
                ar = ar + pr * yr - pi_ * yi
                ai = ai + pr * yi + pi_ * yr
                tmp = pr * rot[m, 0] - pi_ * rot[m, 1]
                ph[m, 1] = pr * rot[m, 1] + pi_ * rot[m, 0]
                ph[m, 0] = tmp
            total = total + ar * ar + ai * ai
        out[p] = total / norm
    return np.asarray(out)


def systematic_indices(const double[:] weights, double u):
    """Ancestor indices for systematic resampling with offset ``u`` in [0, 1)."""
    cdef Py_ssize_t n = weights.shape[0]
    cdef cnp.intp_t[:] idx = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t i = 0, j = 0
    cdef double cdf = weights[0]
    cdef double pos
    while i < n:
        pos = (u + i) / n
        if pos < cdf or j == n - 1:
            idx[i] = j
            i += 1
        else:
            j += 1
            cdf = cdf + weights[j]
    return np.asarray(idx)


def fractional_delay(const double[:] src, const double[:] delay,
                     const double[:] gain):
    """Time-varying fractional delay with an 8-tap Hann-windowed sinc.

    ``out[n] = gain[n] * src(n - delay[n])``; samples outside ``src`` are zero.
    """
    cdef Py_ssize_t n_out = delay.shape[0]
    cdef Py_ssize_t n_src = src.shape[0]
    cdef double[:] out = np.zeros(n_out)
    cdef double[8] h
    cdef Py_ssize_t n, j, i0, idx
    cdef double x, frac, u, hs, acc, s
    for n in range(n_out):
        x = n - delay[n]
        i0 = <Py_ssize_t>floor(x)
        frac = x - i0
        hs = 0.0
        for j in range(8):
            u = frac - (j - 3)
            if u == 0.0:
                h[j] = 1.0
            else:
                h[j] = sin(M_PI * u) / (M_PI * u)
            h[j] = h[j] * 0.5 * (1.0 + cos(M_PI * u / 4.0))
            hs = hs + h[j]
        acc = 0.0
        for j in range(8):
            idx = i0 + j - 3
            if 0 <= idx < n_src:
                acc = acc + h[j] * src[idx]
        out[n] = gain[n] * acc / hs
    return np.asarray(out)
