"""Moments of the blind convolution model and the closed-form LMMSE estimator.

Vectors are flattened row-major images (length ``N = n*n``) and kernels
(length ``D = d*d``).  The signal covariance ``var_alpha * A.T @ A`` (``A``
the atom matrix) is never formed on its own; it enters the assembled
moments through products with the atoms.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from numpy.polynomial.legendre import leggauss
from scipy.stats import gamma as gamma_dist

from .conv import embed_kernel, shift_operator, synthesize
from .errors import InvalidArgumentError, SingularMomentsError
from .priors import gaussian_kernel

TAIL = 1e-8


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    def expect(self, f):
        return sum(w * f(s) for s, w in zip(self.nodes, self.weights))


def gamma_quadrature(a, beta, M=64):
    """Gauss-Legendre rule for expectations under Gamma(a, rate beta).

    Nodes span the ``[1e-8, 1 - 1e-8]`` quantile range; weights are the
    Legendre weights times the density, renormalized to sum to one.
    """
    if not (a > 0 and beta > 0) or M < 2:
        raise InvalidArgumentError(f"need a, beta > 0 and M >= 2, got a={a}, beta={beta}, M={M}")
    dist = gamma_dist(a, scale=1.0 / beta)
    lo, hi = dist.ppf(TAIL), dist.ppf(1.0 - TAIL)
    t, wl = leggauss(int(M))
    nodes = lo + (hi - lo) * (t + 1.0) / 2.0
    w = wl * dist.pdf(nodes)
    w = w / w.sum()
    return QuadratureRule(nodes=nodes, weights=w)


@dataclass(frozen=True, eq=False)
class MomentSet:
    """First and second moments of ``(x, h, y)``.

    Theoretical sets also carry the dictionary and coefficient variance so the
    Tikhonov check can rebuild the signal covariance.
    """

    mean_x: np.ndarray
    mean_h: np.ndarray
    mean_y: np.ndarray
    C_xy: np.ndarray
    C_hy: np.ndarray
    C_yy: np.ndarray
    kind: str
    n_samples: int = 0
    dictionary: object = field(default=None, repr=False)
    var_alpha: float = 0.0

    @property
    def n(self):
        return int(round(np.sqrt(self.mean_x.size)))

    @property
    def d(self):
        return int(round(np.sqrt(self.mean_h.size)))

    def arrays(self):
        return {"mean_x": self.mean_x, "mean_h": self.mean_h, "mean_y": self.mean_y,
                "C_xy": self.C_xy, "C_hy": self.C_hy, "C_yy": self.C_yy}


@dataclass(frozen=True, eq=False)
class LmmseEstimate:
    x_hat: np.ndarray
    h_hat: np.ndarray


def _kernel_spectra(rule, d, n):
    """Quadrature kernels (M, D) and the real DFT of their embeddings (M, N)."""
    G = np.stack([gaussian_kernel(s, d).ravel() for s in rule.nodes])
    # centred symmetric kernels have real spectra
    spec = np.stack([np.fft.fft2(embed_kernel(g.reshape(d, d), n)).real.ravel() for g in G])
    return G, spec


def sandwich_mixture(S, spectra, weights):
    """``sum_k w_k H_k S H_k^T`` for circulant ``H_k`` with real spectra.

    Every ``H_k`` is diagonal in the 2D DFT basis, so the mixture is one
    transform of ``S`` to Fourier space, an entrywise weight, and back.
    """
    N = S.shape[0]
    n = int(round(np.sqrt(N)))
    W = (spectra * weights[:, None]).T @ spectra
    S4 = S.reshape(n, n, n, n)
    Z = np.fft.fft2(np.fft.ifft2(S4, axes=(2, 3)), axes=(0, 1))
    Z *= W.reshape(n, n, n, n)
    R = np.fft.ifft2(np.fft.fft2(Z, axes=(2, 3)), axes=(0, 1)).real
    R = R.reshape(N, N)
    return 0.5 * (R + R.T)


def _blur_rows(rows, h, n):
    """Blur each flattened image in ``rows`` (shape (m, N)) with the kernel ``h``."""
    spec = np.fft.rfft2(embed_kernel(h, n))
    imgs = rows.reshape(-1, n, n)
    return np.fft.irfft2(np.fft.rfft2(imgs) * spec, s=(n, n)).reshape(rows.shape)


def theoretical_moments(signal, kernel, noise, rule):
    dictionary = signal.dictionary
    n, d = dictionary.n, kernel.d
    N = n * n
    A = dictionary.atoms
    var = signal.variance

    mean_x = synthesize(dictionary, dictionary.mu_alpha).ravel()
    G, spectra = _kernel_spectra(rule, d, n)
    w = rule.weights
    mean_h = w @ G
    Gc = G - mean_h
    C_hh = (Gc * w[:, None]).T @ Gc
    mh = mean_h.reshape(d, d)
    mean_y = _blur_rows(mean_x[None, :], mh, n)[0]

    blurred_atoms = _blur_rows(A, mh, n)
    C_xy = var * (A.T @ blurred_atoms)
    C_hy = C_hh @ shift_operator(mean_x.reshape(n, n), d).T

    S_x = var * (A.T @ A) + np.outer(mean_x, mean_x)
    C_yy = sandwich_mixture(S_x, spectra, w)
    C_yy -= np.outer(mean_y, mean_y)
    C_yy[np.diag_indices(N)] += noise.c_eps
    return MomentSet(mean_x=mean_x, mean_h=mean_h, mean_y=mean_y, C_xy=C_xy, C_hy=C_hy,
                     C_yy=C_yy, kind="theoretical", dictionary=dictionary, var_alpha=var)


def _sample_matrices(samples):
    if hasattr(samples, "X") and hasattr(samples, "Y"):
        return samples.X, samples.H, samples.Y
    insts = list(samples.instances if hasattr(samples, "instances") else samples)
    X = np.stack([np.ravel(s.x) for s in insts])
    H = np.stack([np.ravel(s.h) for s in insts])
    Y = np.stack([np.ravel(s.y) for s in insts])
    return X, H, Y


def empirical_moments(samples, n_samples=None):
    """Sample means and unbiased (cross-)covariances of the first ``n_samples`` samples.

    ``samples`` is a dataset, a list of instances, or a batch with ``X``,
    ``H``, ``Y`` row matrices.  Rows are put in a canonical order before
    reduction, so the result does not depend on sample order.
    """
    X, H, Y = _sample_matrices(samples)
    total = X.shape[0]
    if n_samples is None:
        n_samples = total
    if n_samples < 2 or n_samples > total:
        raise InvalidArgumentError(f"need 2 <= n_samples <= {total}, got {n_samples}")
    X, H, Y = X[:n_samples], H[:n_samples], Y[:n_samples]
    order = np.lexsort(np.concatenate([Y, X, H], axis=1).T[::-1])
    X, H, Y = X[order], H[order], Y[order]

    mx, mh, my = X.mean(axis=0), H.mean(axis=0), Y.mean(axis=0)
    Xc, Hc, Yc = X - mx, H - mh, Y - my
    scale = 1.0 / (n_samples - 1)
    C_yy = scale * (Yc.T @ Yc)
    return MomentSet(mean_x=mx, mean_h=mh, mean_y=my, C_xy=scale * (Xc.T @ Yc),
                     C_hy=scale * (Hc.T @ Yc), C_yy=0.5 * (C_yy + C_yy.T),
                     kind="empirical", n_samples=int(n_samples))


def default_ridge(m):
    """Zero for theoretical moments; ``1e-6 * trace(C_yy) / N`` for rank-deficient empirical ones."""
    N = m.mean_y.size
    # centred sample covariance has rank <= n_samples - 1
    if m.kind == "empirical" and m.n_samples <= N:
        return 1e-6 * np.trace(m.C_yy) / N
    return 0.0


class LmmseEstimator:
    """Factor ``C_yy + ridge * I`` once and apply the affine estimator to many observations."""

    def __init__(self, moments, ridge=None):
        if ridge is None:
            ridge = default_ridge(moments)
        if ridge < 0:
            raise InvalidArgumentError(f"ridge must be nonnegative, got {ridge}")
        self.moments = moments
        self.ridge = float(ridge)
        C = moments.C_yy
        if self.ridge:
            C = C + self.ridge * np.eye(C.shape[0])
        try:
            if not np.all(np.isfinite(C)):
                raise np.linalg.LinAlgError("non-finite covariance")
            self._factor = scipy.linalg.cho_factor(C, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise SingularMomentsError(
                f"C_yy + {self.ridge:g} I is not positive definite ({exc}); "
                "retry with a larger ridge") from exc

    def innovation_weights(self, y):
        """``(C_yy + ridge I)^{-1} (y - E[y])`` for one image or a stack of images."""
        m = self.moments
        y = np.asarray(y, dtype=np.float64)
        N = m.mean_y.size
        if y.size % N:
            raise InvalidArgumentError(f"observation size {y.size} incompatible with N={N}")
        r = y.reshape(-1, N) - m.mean_y
        return scipy.linalg.cho_solve(self._factor, r.T, check_finite=False).T

    def estimate(self, y):
        m = self.moments
        z = self.innovation_weights(y)[0]
        n, d = m.n, m.d
        return LmmseEstimate(x_hat=(m.mean_x + m.C_xy @ z).reshape(n, n),
                             h_hat=(m.mean_h + m.C_hy @ z).reshape(d, d))

    def estimate_many(self, ys):
        m = self.moments
        Z = self.innovation_weights(ys)
        n, d = m.n, m.d
        xs = (m.mean_x + Z @ m.C_xy.T).reshape(-1, n, n)
        hs = (m.mean_h + Z @ m.C_hy.T).reshape(-1, d, d)
        return xs, hs


def lmmse_estimate(m, y, ridge=None):
    return LmmseEstimator(m, ridge).estimate(y)


def tikhonov_residual(m, est, y):
    """Relative residual of the generalized Tikhonov normal equations at ``est.x_hat``.

    The signal penalty uses the pseudo-inverse of the signal covariance, so
    the problem is posed over coefficients ``beta`` with ``x = E[x] + A.T beta``.
    The off-range part of ``x_hat - E[x]`` is reported relative to its norm.
    """
    if m.kind != "theoretical" or m.dictionary is None:
        raise InvalidArgumentError("tikhonov_residual needs theoretical moments")
    n, d = m.n, m.d
    A = m.dictionary.atoms
    var = m.var_alpha
    mh = m.mean_h.reshape(d, d)
    y = np.asarray(y, dtype=np.float64).ravel()

    B = _blur_rows(A, mh, n)  # rows: blurred atoms, i.e. A @ Mbar.T
    Mbar_mean_x = _blur_rows(m.mean_x[None, :], mh, n)[0]
    blurred_second = var * (B.T @ B) + np.outer(Mbar_mean_x, Mbar_mean_x)
    C_p = m.C_yy - blurred_second + np.outer(m.mean_y, m.mean_y)
    fac = scipy.linalg.cho_factor(0.5 * (C_p + C_p.T), lower=True)

    dx = np.asarray(est.x_hat, dtype=np.float64).ravel() - m.mean_x
    beta = A @ dx
    off_range = dx - A.T @ beta
    Cp_inv_B = scipy.linalg.cho_solve(fac, B.T)
    L_beta = B @ (Cp_inv_B @ beta) + beta / var
    rhs = Cp_inv_B.T @ (y - Mbar_mean_x)
    num = np.linalg.norm(L_beta - rhs)
    res = 0.0 if num == 0 else num / (np.linalg.norm(L_beta) + np.linalg.norm(rhs))
    dnorm = np.linalg.norm(dx)
    if dnorm > 0:
        res = max(res, np.linalg.norm(off_range) / dnorm)
    return float(res)
