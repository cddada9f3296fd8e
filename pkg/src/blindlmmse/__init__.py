"""Blind LMMSE and MAP estimators for synthetic 2D blind deconvolution."""

__version__ = "0.1.0"

from ._backend import BACKEND
from .conv import (Dictionary, analyze, conv2_adj, conv2_circ, dct2_atom, embed_kernel,
                   make_dictionary, restrict_to_kernel, synthesize)
from .datagen import (Dataset, ProblemInstance, generate_dataset, generate_instance,
                      load_dataset, save_dataset)
from .errors import (BlindLmmseError, ConfigError, DatasetError, DivergenceError,
                     InvalidArgumentError, SingularMomentsError)
from .lmmse import (LmmseEstimate, LmmseEstimator, MomentSet, QuadratureRule, empirical_moments,
                    gamma_quadrature, lmmse_estimate, theoretical_moments, tikhonov_residual)
from .priors import (KernelPrior, NoiseModel, SignalPrior, dgaussian_dsigma, gaussian_kernel,
                     sample_alpha, sample_sigma)
from .solvers import (KERNEL, SIGMA, MapConfig, TraceRecord, fit_sigma, grad_alpha, grad_h_smooth,
                      grad_sigma, map_solve, mse, objective, project_simplex, soft_threshold_shifted)
