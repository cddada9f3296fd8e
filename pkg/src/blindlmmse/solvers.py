"""Alternating-minimization MAP solvers for blind deconvolution.

Both solvers minimize

    ||h * synthesize(alpha) - y||^2 + lambda_alpha ||alpha - mu||_1 + lambda_h R(h)

alternating ``inner_steps`` proximal-gradient steps on ``alpha`` with one
gradient step on the kernel.  ``SIGMA`` parametrizes the kernel by its
Gaussian spread and uses the Gamma negative log-density as ``R``; ``KERNEL``
works on the free kernel, projected on the simplex, with a smoothness ``R``.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from ._backend import kernels as _kernels
from .conv import BlurOperator, analyze, blur, blur_adjoint, kernel_gradient, synthesize
from .errors import DivergenceError, InvalidArgumentError
from .lmmse import LmmseEstimate
from .priors import dgaussian_dsigma, gaussian_kernel, sample_alpha

SIGMA = "sigma"
KERNEL = "kernel"
VARIANTS = (SIGMA, KERNEL)
PRIOR_INIT = "prior"

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class MapConfig:
    """Solver settings.

    ``init`` is ``"prior"`` (draw ``alpha`` from the signal prior, kernel at the
    prior mean spread) or an :class:`LmmseEstimate` to start from.
    ``rel_tol`` stops early once the relative change of ``alpha`` and the
    kernel falls below it; ``None`` always runs ``max_iter`` iterations.
    """

    variant: str = SIGMA
    lambda_alpha: float = 0.1
    lambda_h: float = 1e-3
    step_alpha: float = 1e-1
    step_h: float = 1e-3
    inner_steps: int = 5
    max_iter: int = 1000
    init: object = PRIOR_INIT
    sigma_floor: float = 1e-3
    rel_tol: float = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidArgumentError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.lambda_alpha < 0 or self.lambda_h < 0:
            raise InvalidArgumentError("regularization weights must be nonnegative")
        if not self.step_alpha > 0 or self.step_h < 0:
            raise InvalidArgumentError("step sizes must be positive")
        if self.inner_steps < 1 or self.max_iter < 1:
            raise InvalidArgumentError("inner_steps and max_iter must be >= 1")
        if not (self.init == PRIOR_INIT or isinstance(self.init, LmmseEstimate)):
            raise InvalidArgumentError("init must be 'prior' or an LmmseEstimate")

    @property
    def boosted(self):
        return isinstance(self.init, LmmseEstimate)

    def with_init(self, init):
        return replace(self, init=init)


@dataclass(frozen=True)
class TraceRecord:
    iter: int
    mse_x: float
    mse_h: float
    objective: float


@dataclass(frozen=True, eq=False)
class MapResult:
    x_hat: np.ndarray
    h_hat: np.ndarray
    alpha: np.ndarray
    sigma: float
    trace: list
    iterations: int


def mse(u, v):
    """Per-coordinate mean squared error."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.size != v.size:
        raise InvalidArgumentError(f"length mismatch: {u.size} vs {v.size}")
    diff = u - v
    return float(diff @ diff) / u.size


def soft_threshold_shifted(v, mu, tau):
    """Proximal map of ``tau * ||. - mu||_1``."""
    if tau < 0:
        raise InvalidArgumentError(f"threshold must be nonnegative, got {tau}")
    return _kernels.soft_threshold_shifted(np.ascontiguousarray(v, dtype=np.float64),
                                           np.ascontiguousarray(mu, dtype=np.float64), float(tau))


def project_simplex(v):
    """Euclidean projection onto ``{u >= 0, sum(u) = 1}``; keeps the input shape."""
    v = np.asarray(v, dtype=np.float64)
    out = _kernels.project_simplex(np.ascontiguousarray(v.ravel()))
    return out.reshape(v.shape)


def smoothness(h):
    """``||grad h||^2`` with forward differences; the Neumann boundary adds no terms."""
    dr = np.diff(h, axis=0)
    dc = np.diff(h, axis=1)
    return float(np.sum(dr * dr) + np.sum(dc * dc))


def smoothness_grad(h):
    """Gradient of :func:`smoothness`, i.e. ``2 grad^T grad h``."""
    dr = np.diff(h, axis=0)
    dc = np.diff(h, axis=1)
    g = np.zeros_like(h)
    g[:-1, :] -= dr
    g[1:, :] += dr
    g[:, :-1] -= dc
    g[:, 1:] += dc
    return 2.0 * g


def gamma_penalty(sigma, kernel_prior):
    """``beta * sigma - (a - 1) * log(sigma)``."""
    if not sigma > 0:
        raise InvalidArgumentError(f"sigma must be positive, got {sigma}")
    return kernel_prior.beta * sigma - (kernel_prior.a - 1.0) * math.log(sigma)


def data_term(alpha, h, y, dictionary):
    r = blur(synthesize(dictionary, alpha), h) - y
    return float(np.sum(r * r))


def objective(alpha, kernel_state, y, dictionary, cfg, kernel_prior):
    """MAP energy; ``kernel_state`` is the spread for ``SIGMA`` and the kernel for ``KERNEL``."""
    if cfg.variant == SIGMA:
        sigma = float(kernel_state)
        if not sigma > 0:
            raise InvalidArgumentError(f"sigma must be positive, got {sigma}")
        h = gaussian_kernel(sigma, kernel_prior.d)
        reg = gamma_penalty(sigma, kernel_prior)
    else:
        h = np.asarray(kernel_state, dtype=np.float64)
        reg = smoothness(h)
    l1 = float(np.sum(np.abs(np.asarray(alpha) - dictionary.mu_alpha)))
    return data_term(alpha, h, y, dictionary) + cfg.lambda_alpha * l1 + cfg.lambda_h * reg


def grad_alpha(alpha, h, y, dictionary):
    """Gradient of the data term with respect to the coefficients."""
    r = blur(synthesize(dictionary, alpha), h) - y
    return 2.0 * analyze(dictionary, blur_adjoint(h, r))


def _data_grad_h(alpha, h, y, dictionary):
    x = synthesize(dictionary, alpha)
    r = blur(x, h) - y
    return 2.0 * kernel_gradient(x, r, h.shape[0])


def grad_h_smooth(alpha, h, y, dictionary, lambda_h):
    """Gradient of the ``KERNEL`` objective with respect to the kernel entries."""
    h = np.asarray(h, dtype=np.float64)
    return _data_grad_h(alpha, h, y, dictionary) + lambda_h * smoothness_grad(h)


def grad_sigma(alpha, sigma, y, dictionary, kernel_prior, lambda_h):
    """Derivative of the ``SIGMA`` objective with respect to the spread."""
    if not sigma > 0:
        raise InvalidArgumentError(f"sigma must be positive, got {sigma}")
    d = kernel_prior.d
    h = gaussian_kernel(sigma, d)
    gh = _data_grad_h(alpha, h, y, dictionary)
    return float(np.sum(gh * dgaussian_dsigma(sigma, d))
                 + lambda_h * (kernel_prior.beta - (kernel_prior.a - 1.0) / sigma))


def fit_sigma(h_hat, bounds=(1e-3, 20.0), tol=1e-5):
    """Spread of the Gaussian kernel closest to ``h_hat`` in least squares.

    Golden-section search on ``bounds`` down to an interval of width ``tol``;
    the endpoints are compared at the end so a monotone objective returns
    the boundary exactly.
    """
    h_hat = np.asarray(h_hat, dtype=np.float64)
    lo, hi = float(bounds[0]), float(bounds[1])
    if not (0 < lo < hi):
        raise InvalidArgumentError(f"invalid bounds {bounds}")
    d = h_hat.shape[0]
    if h_hat.ndim == 1:
        d = int(round(math.sqrt(h_hat.size)))
        h_hat = h_hat.reshape(d, d)

    def f(s):
        diff = gaussian_kernel(s, d) - h_hat
        return float(np.sum(diff * diff))

    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    e = a + _GOLDEN * (b - a)
    fc, fe = f(c), f(e)
    while b - a > tol:
        if fc < fe:
            b, e, fe = e, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, e, fe
            e = a + _GOLDEN * (b - a)
            fe = f(e)
    best = 0.5 * (a + b)
    candidates = [(f(best), best), (f(lo), lo), (f(hi), hi)]
    return min(candidates)[1]


def initial_state(dictionary, signal_prior, kernel_prior, cfg, rng=None):
    """Starting ``(alpha, sigma, h)`` for the configured initialization."""
    d = kernel_prior.d
    if cfg.boosted:
        est = cfg.init
        alpha = analyze(dictionary, est.x_hat)
        if cfg.variant == SIGMA:
            sigma = max(fit_sigma(est.h_hat, bounds=(cfg.sigma_floor, 4.0 * d)), cfg.sigma_floor)
            return alpha, sigma, gaussian_kernel(sigma, d)
        return alpha, None, project_simplex(est.h_hat)
    if rng is None:
        raise InvalidArgumentError("prior initialization needs a random generator")
    alpha = sample_alpha(signal_prior, rng)
    sigma = kernel_prior.a / kernel_prior.beta
    h = gaussian_kernel(sigma, d)
    return alpha, (sigma if cfg.variant == SIGMA else None), h


def map_solve(y, dictionary, priors, cfg, rng=None, ground_truth=None):
    """Run the alternating scheme for ``cfg.max_iter`` outer iterations.

    ``priors`` is ``(signal_prior, kernel_prior)``.  With ``ground_truth`` (an
    object with ``x`` and ``h``) the trace holds the initial state as
    iteration 0 followed by one record per outer iteration.
    """
    signal_prior, kernel_prior = priors[0], priors[1]
    y = np.ascontiguousarray(y, dtype=np.float64)
    d = kernel_prior.d
    mu = dictionary.mu_alpha
    alpha, sigma, h = initial_state(dictionary, signal_prior, kernel_prior, cfg, rng)
    tau = cfg.step_alpha * cfg.lambda_alpha
    is_sigma = cfg.variant == SIGMA
    need_objective = ground_truth is not None
    trace = []

    def record(it):
        x = synthesize(dictionary, alpha)
        obj = objective(alpha, sigma if is_sigma else h, y, dictionary, cfg, kernel_prior)
        if not math.isfinite(obj):
            raise DivergenceError(it)
        trace.append(TraceRecord(iter=it, mse_x=mse(x, ground_truth.x),
                                 mse_h=mse(h, ground_truth.h), objective=obj))

    if need_objective:
        record(0)

    it = 0
    for it in range(1, cfg.max_iter + 1):
        alpha_prev, h_prev = alpha, h
        op = BlurOperator(h, dictionary.n)
        for _ in range(cfg.inner_steps):
            x = synthesize(dictionary, alpha)
            r = op(x) - y
            g = 2.0 * analyze(dictionary, op.adjoint(r))
            alpha = _kernels.soft_threshold_shifted(alpha - cfg.step_alpha * g, mu, tau)

        x = synthesize(dictionary, alpha)
        r = op(x) - y
        gh = 2.0 * kernel_gradient(x, r, d)
        if is_sigma:
            gs = float(np.sum(gh * dgaussian_dsigma(sigma, d)))
            gs += cfg.lambda_h * (kernel_prior.beta - (kernel_prior.a - 1.0) / sigma)
            sigma = max(sigma - cfg.step_h * gs, cfg.sigma_floor)
            if not math.isfinite(sigma):
                raise DivergenceError(it)
            h = gaussian_kernel(sigma, d)
        else:
            gh += cfg.lambda_h * smoothness_grad(h)
            h = project_simplex(h - cfg.step_h * gh)
            # huge gradients swamp the unit mass in floating point
            if not abs(h.sum() - 1.0) <= 1e-8:
                raise DivergenceError(it, "kernel step lost the simplex constraint")

        if need_objective:
            record(it)
        elif not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(h))):
            raise DivergenceError(it)

        if cfg.rel_tol is not None:
            da = np.linalg.norm(alpha - alpha_prev) / max(np.linalg.norm(alpha_prev), 1e-300)
            dh = np.linalg.norm(h - h_prev) / max(np.linalg.norm(h_prev), 1e-300)
            if max(da, dh) < cfg.rel_tol:
                break

    return MapResult(x_hat=synthesize(dictionary, alpha), h_hat=h, alpha=alpha,
                     sigma=sigma if is_sigma else float("nan"), trace=trace, iterations=it)
