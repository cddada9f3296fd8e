# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops for the solvers.

Periodic convolution with a small centred kernel is done directly in pixel
space: for an odd d x d kernel on an n x n torus with d much smaller than n
this beats the FFT round trip.  Every loop walks contiguous rows and splits
the periodic wrap into two straight segments so the compiler can vectorize.
"""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef inline void _axpy_wrapped(double a, const double* src, double* dst,
                               Py_ssize_t n, Py_ssize_t shift) noexcept nogil:
    # dst[q] += a * src[(q + shift) % n]
    cdef Py_ssize_t q, m = n - shift
    for q in range(m):
        dst[q] += a * src[q + shift]
    for q in range(m, n):
        dst[q] += a * src[q - m]


cdef inline double _dot_wrapped(const double* src, const double* other,
                                Py_ssize_t n, Py_ssize_t shift) noexcept nogil:
    # sum_q src[(q + shift) % n] * other[q]
    cdef Py_ssize_t q, m = n - shift
    cdef double acc = 0.0
    for q in range(m):
        acc += src[q + shift] * other[q]
    for q in range(m, n):
        acc += src[q - m] * other[q]
    return acc


def conv_small(const double[:, ::1] x, const double[:, ::1] h):
    """Periodic convolution ``(h * x)[p] = sum_k h[k] x[p - k]`` with centred ``h``."""
    cdef Py_ssize_t n = x.shape[0], d = h.shape[0], c = d // 2
    cdef Py_ssize_t a, b, p, sr, sc
    cdef double w
    out_arr = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for a in range(d):
            sr = ((c - a) % n + n) % n
            for b in range(d):
                w = h[a, b]
                if w == 0.0:
                    continue
                sc = ((c - b) % n + n) % n
                for p in range(n):
                    _axpy_wrapped(w, &x[(p + sr) % n, 0], &out[p, 0], n, sc)
    return out_arr


def corr_small(const double[:, ::1] h, const double[:, ::1] r):
    """Adjoint of :func:`conv_small` in ``x``: ``out[p] = sum_k h[k] r[p + k]``."""
    cdef Py_ssize_t n = r.shape[0], d = h.shape[0], c = d // 2
    cdef Py_ssize_t a, b, p, sr, sc
    cdef double w
    out_arr = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for a in range(d):
            sr = ((a - c) % n + n) % n
            for b in range(d):
                w = h[a, b]
                if w == 0.0:
                    continue
                sc = ((b - c) % n + n) % n
                for p in range(n):
                    _axpy_wrapped(w, &r[(p + sr) % n, 0], &out[p, 0], n, sc)
    return out_arr


def corr_restrict(const double[:, ::1] x, const double[:, ::1] r, Py_ssize_t d):
    """Gradient of ``<h * x, r>`` with respect to the centred ``d x d`` kernel."""
    cdef Py_ssize_t n = x.shape[0], c = d // 2
    cdef Py_ssize_t a, b, p, sr, sc
    cdef double acc
    out_arr = np.empty((d, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for a in range(d):
            sr = ((c - a) % n + n) % n
            for b in range(d):
                sc = ((c - b) % n + n) % n
                acc = 0.0
                for p in range(n):
                    acc += _dot_wrapped(&x[(p + sr) % n, 0], &r[p, 0], n, sc)
                out[a, b] = acc
    return out_arr


def project_simplex(const double[::1] y):
    """Euclidean projection onto the unit simplex (Condat's linear-time method)."""
    cdef Py_ssize_t length = y.shape[0]
    cdef Py_ssize_t i, auxlength, auxlengthold, start
    cdef double tau
    cdef double* aux0
    cdef double* aux
    out_arr = np.empty(length, dtype=np.float64)
    cdef double[::1] x = out_arr
    if length == 0:
        return out_arr
    aux0 = <double*> malloc(length * sizeof(double))
    if aux0 == NULL:
        raise MemoryError()
    with nogil:
        aux = aux0
        aux[0] = y[0]
        tau = y[0] - 1.0
        auxlength = 1
        auxlengthold = -1
        for i in range(1, length):
            if y[i] > tau:
                aux[auxlength] = y[i]
                tau += (y[i] - tau) / (auxlength - auxlengthold)
                if tau <= y[i] - 1.0:
                    tau = y[i] - 1.0
                    auxlengthold = auxlength - 1
                auxlength += 1
        if auxlengthold >= 0:
            auxlengthold += 1
            auxlength -= auxlengthold
            aux = aux0 + auxlengthold
            start = auxlengthold
            while True:
                start -= 1
                if start < 0:
                    break
                if aux0[start] > tau:
                    aux -= 1
                    aux[0] = aux0[start]
                    auxlength += 1
                    tau += (aux[0] - tau) / auxlength
        while True:
            auxlengthold = auxlength - 1
            auxlength = 0
            for i in range(auxlengthold + 1):
                if aux[i] > tau:
                    aux[auxlength] = aux[i]
                    auxlength += 1
                else:
                    tau += (tau - aux[i]) / (auxlengthold - i + auxlength)
            if auxlength > auxlengthold:
                break
        for i in range(length):
            x[i] = y[i] - tau if y[i] > tau else 0.0
    free(aux0)
    return out_arr


def soft_threshold_shifted(const double[::1] v, const double[::1] mu, double tau):
    """``mu + sign(v - mu) * max(|v - mu| - tau, 0)`` coordinatewise."""
    cdef Py_ssize_t k, m = v.shape[0]
    cdef double t
    out_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for k in range(m):
            t = v[k] - mu[k]
            if t > tau:
                out[k] = mu[k] + (t - tau)
            elif t < -tau:
                out[k] = mu[k] + (t + tau)
            else:
                out[k] = mu[k]
    return out_arr
