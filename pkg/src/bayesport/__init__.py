"""Bayesian multiple testing for portfolio selection in k-factor asset pricing models.

Modules
-------
factor_model  design matrices and per-asset OLS statistics
quadform      distribution of weighted chi-square sums
oracle_test   spike-and-slab Bayes oracle test, thresholds and error rates
hb_sampler    hierarchical Bayes Gibbs sampler with a half-Cauchy global scale
market_sim    synthetic markets and the simulation experiments
backtest      rolling monthly backtest and yearly risk tables
garch         GARCH(1,1) quasi-maximum likelihood
cli           command-line interface
"""
from .errors import (
    BayesportError,
    ConfigError,
    DataError,
    Degenerate,
    Infeasible,
    InsufficientAssets,
    InsufficientData,
    InsufficientDraws,
    IntegrationFailure,
    NonConvergence,
    NumericalError,
    NumericalRange,
    RankDeficient,
    WeightSum,
)
from .factor_model import FactorDesign, ReturnsPanel, build_design, idiosyncratic_bound, ols_estimate
from .oracle_test import SpikeSlabPrior, LossSpec, default_lambda0, run_oracle_test, bfdr_threshold, error_probs
from .quadform import WeightedChiSquare, qf_cdf, qf_cdf_mc

__version__ = "0.1.0"
