"""Monte Carlo simulation of the IG-OU BNS stochastic volatility model under the
minimal martingale measure.

Two path engines are provided: ``algo1`` simulates under the physical measure
and reweights with the density process, ``algo2`` simulates directly under the
changed measure with acceptance/rejection-sampled jump corrections.
"""

from .engines import PathBatch, PathP, PathPstar, simulate, simulate_path_algo1, simulate_path_algo2
from .errors import (AssumptionViolation, BNSError, EngineError, NegativeRateError,
                     OracleFailure, ParameterError)
from .estimators import (EstimateReport, error_percent, estimate_asian_mean,
                         estimate_terminal_mean, price_option)
from .model import (GridSpec, LevyConstants, ModelParams, ValidatedParams, acceptance_probability,
                    ar_mass, f_tilde, g_envelope, g_tilde, k_factor, levy_constants, levy_density,
                    levy_moment_1, levy_moment_2, paper_params, validate)
from .sampling import RngStream

__all__ = [
    "AssumptionViolation", "BNSError", "EngineError", "EstimateReport", "GridSpec",
    "LevyConstants", "ModelParams", "NegativeRateError", "OracleFailure", "ParameterError",
    "PathBatch", "PathP", "PathPstar", "RngStream", "ValidatedParams", "acceptance_probability",
    "ar_mass", "error_percent", "estimate_asian_mean", "estimate_terminal_mean", "f_tilde",
    "g_envelope", "g_tilde", "k_factor", "levy_constants", "levy_density", "levy_moment_1",
    "levy_moment_2", "paper_params", "price_option", "simulate", "simulate_path_algo1",
    "simulate_path_algo2", "validate",
]
