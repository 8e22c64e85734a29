"""Simulation and RKHS estimation of multivariate ReLU-rectified Hawkes processes."""

__version__ = "0.1.0"

from .baselines import FeatureBasisModel, basis_interaction_at, fit_basis
from .errors import (ConfigError, DomainError, FormatError, HawkesError, NumericalError, ParseError, SearchError,
                     ShapeError, SimulationError, ValidationError)
from .events import EventData, concat_recordings, load_events, restrict_window, save_events
from .evaluate import FitReport, GridSpec, approximation_sweep, grid_search, horizon_study, l1_error
from .fit import FitResult, fit_rkhs
from .kernelmath import KernelConfig, G_gamma, double_int_s, erf_gamma, gauss_kernel, int_s, r_ell_at, s_ell
from .model import LinkSpec, RkhsParams, intensity, interaction_at, load_model, pre_intensity, save_model
from .objective import ObjectiveConfig, exact_neg_log_likelihood, link_pair, objective_gradient, objective_value
from .optimizer import Diagnostics, OptimOptions, minimize
from .precompute import PrecomputedMatrices, build_matrices
from .simulate import GroundTruthModel, builtin_kernels, simulate_thinning, time_rescaling_residuals
