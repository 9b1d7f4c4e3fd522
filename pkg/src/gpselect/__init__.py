"""Rescaled squared-exponential GP regression with stochastic variable
selection under Gaussian random design, plus numerical tooling for the
associated RKHS, metric-entropy, and small-ball quantities."""

from .eigen import (
    DesignSpec,
    EigenConstants,
    EigenSpectrum,
    SeriesFunction,
    SparsityPattern,
    compute_constants,
    enumerate_spectrum,
    kernel_eval,
    sample_path,
    truncation_budget,
)
from .estimator import SparseGPRegressor
from .inference import Dataset, log_marginal_likelihood, mcmc_run, summarize
from .prior import RescalingPriorConfig, SparsityPriorConfig
from .rkhs import Ellipsoid, SmoothnessSpec, decentering, entropy_bounds, lambert_w
from .smallball import centered_small_ball, concentration, shifted_small_ball

__version__ = "0.1.0"
