"""Prior distributions of the synthetic model and their samplers."""

from dataclasses import dataclass

import numpy as np

from .conv import Dictionary
from .errors import InvalidArgumentError

SIGMA_GUARD = 1e-6


@dataclass(frozen=True)
class SignalPrior:
    """Laplace coefficients located at ``dictionary.mu_alpha`` with scale ``b``."""

    dictionary: Dictionary
    b: float

    def __post_init__(self):
        if not self.b > 0:
            raise InvalidArgumentError(f"Laplace scale must be positive, got {self.b}")

    @property
    def variance(self):
        return 2.0 * self.b ** 2


@dataclass(frozen=True)
class KernelPrior:
    """Gaussian kernels of side ``d`` whose spread is Gamma(shape ``a``, rate ``beta``)."""

    d: int
    a: float
    beta: float

    def __post_init__(self):
        if not (self.a > 0 and self.beta > 0):
            raise InvalidArgumentError(f"Gamma parameters must be positive, got a={self.a}, beta={self.beta}")
        if self.d < 1 or self.d % 2 == 0:
            raise InvalidArgumentError(f"kernel side must be odd, got {self.d}")


@dataclass(frozen=True)
class NoiseModel:
    c_eps: float

    def __post_init__(self):
        if not self.c_eps > 0:
            raise InvalidArgumentError(f"noise variance must be positive, got {self.c_eps}")


def sample_alpha(prior, rng, size=None):
    """Draw Laplace coefficients by inverting the CDF of uniform draws.

    Returns shape ``(K,)``, or ``(size, K)`` when ``size`` is given.
    """
    mu = prior.dictionary.mu_alpha
    shape = mu.shape if size is None else (size,) + mu.shape
    u = rng.random(shape) - 0.5
    # rng.random() can return exactly 0, which maps to u = -1/2 and log(0).
    u = np.where(u == -0.5, np.nextafter(-0.5, 0.0), u)
    return mu - prior.b * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def _standard_gamma(shape, rng, size):
    """Marsaglia-Tsang rejection sampler for Gamma(shape, 1), vectorized."""
    boost = shape < 1.0
    k = shape + 1.0 if boost else shape
    dd = k - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * dd)
    out = np.empty(size)
    filled = 0
    while filled < size:
        m = max(size - filled, 16)
        z = rng.standard_normal(m)
        u = rng.random(m)
        v = (1.0 + c * z) ** 3
        ok = v > 0
        logv = np.log(np.where(ok, v, 1.0))
        accept = ok & ((u < 1.0 - 0.0331 * z ** 4)
                       | (np.log(u) < 0.5 * z ** 2 + dd * (1.0 - v + logv)))
        draws = (dd * v)[accept][: size - filled]
        out[filled:filled + draws.size] = draws
        filled += draws.size
    if boost:
        out *= rng.random(size) ** (1.0 / shape)
    return out


def sample_sigma(prior, rng, size=None):
    """Draw kernel spreads from Gamma(a, rate beta), resampling draws below 1e-6."""
    count = 1 if size is None else int(size)
    out = _standard_gamma(prior.a, rng, count) / prior.beta
    low = out < SIGMA_GUARD
    while np.any(low):
        out[low] = _standard_gamma(prior.a, rng, int(low.sum())) / prior.beta
        low = out < SIGMA_GUARD
    return float(out[0]) if size is None else out


def _squared_radius(d):
    off = np.arange(d) - d // 2
    return off[:, None] ** 2 + off[None, :] ** 2


def gaussian_kernel(sigma, d):
    """Isotropic Gaussian on the centred ``d x d`` grid, normalized to sum one."""
    if not sigma > 0:
        raise InvalidArgumentError(f"sigma must be positive, got {sigma}")
    if d < 1 or d % 2 == 0:
        raise InvalidArgumentError(f"kernel side must be odd, got {d}")
    w = np.exp(-_squared_radius(d) / (2.0 * sigma ** 2))
    return w / w.sum()


def dgaussian_dsigma(sigma, d):
    """Derivative of :func:`gaussian_kernel` with respect to ``sigma``."""
    if not sigma > 0:
        raise InvalidArgumentError(f"sigma must be positive, got {sigma}")
    h = gaussian_kernel(sigma, d)
    r2 = _squared_radius(d)
    return h * (r2 - np.sum(h * r2)) / sigma ** 3
