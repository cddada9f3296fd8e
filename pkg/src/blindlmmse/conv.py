"""Periodic 2D convolution, kernel embedding and the DCT dictionary.

Images are ``(n, n)`` float arrays living on the torus.  Kernels are odd
``(d, d)`` arrays whose entry ``[a, b]`` sits at offset ``(a - d//2, b - d//2)``.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.fft import dctn, idctn, irfft2, rfft2

from . import _kernels_py
from ._backend import kernels as _kernels
from .errors import InvalidArgumentError


def _as_image(x, name="x"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != x.shape[1] or x.shape[0] < 1:
        raise InvalidArgumentError(f"{name} must be a square 2D array, got shape {x.shape}")
    return x


def _as_kernel(h, name="h"):
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] != h.shape[1] or h.shape[0] % 2 == 0:
        raise InvalidArgumentError(f"{name} must be a square odd-sized 2D array, got shape {h.shape}")
    return h


def dct_matrix(n):
    """Orthonormal DCT-II matrix; row ``p`` is the 1D basis vector of frequency ``p``."""
    i = np.arange(n)
    C = np.cos(np.pi * (2 * i[None, :] + 1) * i[:, None] / (2 * n))
    C *= np.sqrt(2.0 / n)
    C[0] /= np.sqrt(2.0)
    return C


def dct2_atom(p, q, n):
    """Orthonormal 2D DCT-II basis image for frequencies ``(p, q)``."""
    if n < 1 or not (0 <= p < n and 0 <= q < n):
        raise InvalidArgumentError(f"frequency ({p}, {q}) out of range for n={n}")
    C = dct_matrix(n)
    return np.outer(C[p], C[q])


@dataclass(frozen=True, eq=False)
class Dictionary:
    """K orthonormal DCT atoms and the Laplace location vector.

    Synthesis and analysis run through the fast 2D DCT.  ``atoms`` is the
    dense ``(K, n*n)`` matrix of flattened atoms, built on first use.
    """

    n: int
    atom_indices: np.ndarray
    mu_alpha: np.ndarray

    @classmethod
    def from_indices(cls, n, atom_indices, mu_alpha):
        idx = np.asarray(atom_indices, dtype=np.int64).reshape(-1, 2)
        mu = np.asarray(mu_alpha, dtype=np.float64).ravel()
        if idx.shape[0] != mu.size:
            raise InvalidArgumentError("atom_indices and mu_alpha lengths differ")
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise InvalidArgumentError("atom index out of range")
        if len({(int(p), int(q)) for p, q in idx}) != idx.shape[0]:
            raise InvalidArgumentError("atom indices must be distinct")
        if not np.all(np.abs(mu) == 0.5):
            raise InvalidArgumentError("mu_alpha entries must be +1/2 or -1/2")
        idx.setflags(write=False)
        mu.setflags(write=False)
        return cls(n=int(n), atom_indices=idx, mu_alpha=mu)

    @property
    def K(self):
        return self.atom_indices.shape[0]

    @cached_property
    def flat_indices(self):
        return self.atom_indices[:, 0] * self.n + self.atom_indices[:, 1]

    @cached_property
    def atoms(self):
        C = dct_matrix(self.n)
        p, q = self.atom_indices[:, 0], self.atom_indices[:, 1]
        A = (C[p, :, None] * C[q, None, :]).reshape(self.K, self.n * self.n)
        A.setflags(write=False)
        return A

    def __eq__(self, other):
        if not isinstance(other, Dictionary):
            return NotImplemented
        return (self.n == other.n
                and np.array_equal(self.atom_indices, other.atom_indices)
                and np.array_equal(self.mu_alpha, other.mu_alpha))

    __hash__ = None


def make_dictionary(n, K, seed):
    """Draw ``K`` distinct DCT frequency pairs and a random sign pattern for ``mu_alpha``.

    ``seed`` is anything :func:`numpy.random.default_rng` accepts.
    """
    if n < 1 or K < 1 or K > n * n:
        raise InvalidArgumentError(f"need 1 <= K <= n^2, got n={n}, K={K}")
    rng = np.random.default_rng(seed)
    flat = rng.choice(n * n, size=K, replace=False)
    idx = np.stack([flat // n, flat % n], axis=1)
    mu = np.where(rng.random(K) < 0.5, 0.5, -0.5)
    return Dictionary.from_indices(n, idx, mu)


def synthesize(dictionary, alpha):
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (dictionary.K,):
        raise InvalidArgumentError(f"alpha must have length {dictionary.K}, got shape {alpha.shape}")
    n = dictionary.n
    coef = np.zeros(n * n)
    coef[dictionary.flat_indices] = alpha
    return idctn(coef.reshape(n, n), norm="ortho")


def analyze(dictionary, x):
    """Inner products of ``x`` with every atom (adjoint of :func:`synthesize`)."""
    x = _as_image(x)
    if x.shape[0] != dictionary.n:
        raise InvalidArgumentError(f"image side {x.shape[0]} does not match dictionary side {dictionary.n}")
    return dctn(x, norm="ortho").ravel()[dictionary.flat_indices]


def kernel_offsets(d):
    """Wrapped row/column positions of the ``d`` kernel offsets, unreduced."""
    return np.arange(d) - d // 2


def embed_kernel(h, n):
    h = _as_kernel(h)
    d = h.shape[0]
    if d > n:
        raise InvalidArgumentError(f"kernel side {d} exceeds image side {n}")
    g = np.zeros((n, n))
    idx = kernel_offsets(d) % n
    g[np.ix_(idx, idx)] = h
    return g


def restrict_to_kernel(g, d):
    """Adjoint of :func:`embed_kernel`: read the ``d x d`` wrapped support of ``g``."""
    g = _as_image(g, "g")
    if d % 2 == 0 or d < 1 or d > g.shape[0]:
        raise InvalidArgumentError(f"invalid kernel side {d} for image side {g.shape[0]}")
    idx = kernel_offsets(d) % g.shape[0]
    return g[np.ix_(idx, idx)].copy()


def _filter_spectrum(h, n):
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise InvalidArgumentError(f"filter must be square, got shape {h.shape}")
    if h.shape[0] == n:
        return np.fft.rfft2(h)
    if h.shape[0] < n and h.shape[0] % 2 == 1:
        return np.fft.rfft2(embed_kernel(h, n))
    raise InvalidArgumentError(f"filter of shape {h.shape} incompatible with image side {n}")


# above this many taps the FFT path beats direct summation
DIRECT_MAX_TAPS = 121


def _use_direct(h, n):
    return (h.ndim == 2 and h.shape[0] == h.shape[1] and h.shape[0] < n and h.shape[0] % 2 == 1
            and h.size <= DIRECT_MAX_TAPS)


def conv2_circ(x, h):
    """Periodic convolution of image ``x`` with ``h``.

    ``h`` is either a centred odd kernel smaller than the image or an
    already embedded ``n x n`` filter.
    """
    x = _as_image(x)
    n = x.shape[0]
    h = np.asarray(h, dtype=np.float64)
    if _use_direct(h, n):
        return _kernels.conv_small(np.ascontiguousarray(x), np.ascontiguousarray(h))
    return np.fft.irfft2(_filter_spectrum(h, n) * np.fft.rfft2(x), s=(n, n))


def conv2_adj(h, r):
    """Adjoint of ``x -> conv2_circ(x, h)`` (periodic correlation with ``h``)."""
    r = _as_image(r, "r")
    n = r.shape[0]
    h = np.asarray(h, dtype=np.float64)
    if _use_direct(h, n):
        return _kernels.corr_small(np.ascontiguousarray(h), np.ascontiguousarray(r))
    return np.fft.irfft2(np.conj(_filter_spectrum(h, n)) * np.fft.rfft2(r), s=(n, n))


def kernel_gradient(x, r, d):
    """Gradient of ``h -> <conv2_circ(x, h), r>`` over a ``d x d`` kernel."""
    x = _as_image(x)
    r = _as_image(r, "r")
    if x.shape != r.shape:
        raise InvalidArgumentError("x and r must have the same shape")
    if d % 2 == 0 or d > x.shape[0]:
        raise InvalidArgumentError(f"invalid kernel side {d}")
    impl = _kernels if d * d <= DIRECT_MAX_TAPS else _kernels_py
    return impl.corr_restrict(np.ascontiguousarray(x), np.ascontiguousarray(r), int(d))


def shift_operator(image, d):
    """Dense ``(n*n, d*d)`` matrix mapping a kernel to its convolution with ``image``.

    Column ``(a, b)`` is ``image`` circularly shifted by the kernel offset.
    """
    image = _as_image(image, "image")
    offs = kernel_offsets(d)
    cols = [np.roll(image, (i, j), axis=(0, 1)).ravel() for i in offs for j in offs]
    return np.stack(cols, axis=1)


class BlurOperator:
    """Convolution by a fixed centred kernel, reused across many images.

    Small kernels go to the direct kernels; larger ones keep their spectrum.
    """

    def __init__(self, h, n):
        self.h = np.ascontiguousarray(_as_kernel(h))
        self.n = int(n)
        self.direct = self.h.shape[0] < self.n and self.h.size <= DIRECT_MAX_TAPS
        if not self.direct:
            self.spectrum = rfft2(embed_kernel(self.h, self.n))

    def __call__(self, x):
        if self.direct:
            return _kernels.conv_small(np.ascontiguousarray(x, dtype=np.float64), self.h)
        return irfft2(self.spectrum * rfft2(x), s=(self.n, self.n))

    def adjoint(self, r):
        if self.direct:
            return _kernels.corr_small(self.h, np.ascontiguousarray(r, dtype=np.float64))
        return irfft2(np.conj(self.spectrum) * rfft2(r), s=(self.n, self.n))


def blur(x, h):
    """Convolve with a centred kernel, unambiguous even when ``d == n``."""
    h = _as_kernel(h)
    if h.shape[0] < x.shape[0] and h.size <= DIRECT_MAX_TAPS:
        return _kernels.conv_small(np.ascontiguousarray(x, dtype=np.float64), np.ascontiguousarray(h))
    return conv2_circ(x, embed_kernel(h, x.shape[0]))


def blur_adjoint(h, r):
    h = _as_kernel(h)
    if h.shape[0] < r.shape[0] and h.size <= DIRECT_MAX_TAPS:
        return _kernels.corr_small(np.ascontiguousarray(h), np.ascontiguousarray(r, dtype=np.float64))
    return conv2_adj(embed_kernel(h, r.shape[0]), r)
