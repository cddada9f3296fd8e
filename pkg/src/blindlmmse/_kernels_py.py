"""Pure numpy fallback for the compiled kernels in ``_kernels.pyx``.

Same signatures and semantics.  Convolutions go through the FFT of the
kernel embedded on the torus; the simplex projection is the sort-based one.
"""

import numpy as np


def _embed(h, n):
    d = h.shape[0]
    c = d // 2
    g = np.zeros((n, n))
    idx = (np.arange(d) - c) % n
    g[np.ix_(idx, idx)] = h
    return g


def conv_small(x, h):
    n = x.shape[0]
    g = _embed(h, n)
    return np.fft.irfft2(np.fft.rfft2(g) * np.fft.rfft2(x), s=(n, n))


def corr_small(h, r):
    n = r.shape[0]
    g = _embed(h, n)
    return np.fft.irfft2(np.conj(np.fft.rfft2(g)) * np.fft.rfft2(r), s=(n, n))


def corr_restrict(x, r, d):
    n = x.shape[0]
    full = np.fft.irfft2(np.conj(np.fft.rfft2(x)) * np.fft.rfft2(r), s=(n, n))
    idx = (np.arange(d) - d // 2) % n
    return np.ascontiguousarray(full[np.ix_(idx, idx)])


def project_simplex(y):
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, y.size + 1)
    rho = np.count_nonzero(u - css / ind > 0)
    tau = css[rho - 1] / rho
    return np.maximum(y - tau, 0.0)


def soft_threshold_shifted(v, mu, tau):
    t = v - mu
    return mu + np.sign(t) * np.maximum(np.abs(t) - tau, 0.0)
