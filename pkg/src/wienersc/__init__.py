"""Counterfactual prediction for panel data with a learnt stationary Gaussian prior.

Control units are demeaned, Gaussianized, and their Fourier power spectrum
becomes the prior for a Wiener-filter reconstruction of the treated unit's
untreated trajectory. Likelihood-ratio and Bayes-factor tests then score the
observed post-treatment departure.
"""

from .gaussianize import TransformPipeline, fit_pipeline, gaussianize, yeo_johnson
from .hypothesis import PolyModel, PostWindow, PriorBox, bayes_factor, upper_limit_ratio
from .kernels import BACKEND
from .panel import PanelData, demean, load_panel
from .pipeline import AnalysisConfig, analyze_treated, analyze_unit
from .placebo import run_placebo
from .spectral import HarmonicBasis, estimate_block_prior, estimate_prior
from .wiener import NoiseModel, posterior_covariance, solve_map, solve_map_joint

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "AnalysisConfig",
    "HarmonicBasis",
    "NoiseModel",
    "PanelData",
    "PolyModel",
    "PostWindow",
    "PriorBox",
    "TransformPipeline",
    "analyze_treated",
    "analyze_unit",
    "bayes_factor",
    "demean",
    "estimate_block_prior",
    "estimate_prior",
    "fit_pipeline",
    "gaussianize",
    "load_panel",
    "posterior_covariance",
    "run_placebo",
    "solve_map",
    "solve_map_joint",
    "upper_limit_ratio",
    "yeo_johnson",
]
