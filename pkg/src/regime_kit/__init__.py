"""Optimal treatment regimes from observational data with nonignorably missing covariates."""

__version__ = "0.1.0"

from ._backend import BACKEND
from .balancing import BalancingWeights, balancing_objective, solve_weights, tune_balance_params
from .baselines import fit_owl_ipw, fit_parametric_q_learning
from .data import CohortDataset, DataError, Trajectory, build_stage_sample, read_cohort_csv, rescale_covariates
from .dtr import FitConfig, FittedRegime, fit_multistage, fit_single_stage
from .kernels import gram_matrix, sobolev_kernel
from .missingness import estimate_gamma_gmm, profile_eta, propensity_eval
from .qreg import build_pseudo_outcome, fit_weighted_spline
from .rules import DecisionRule, fit_rule
from .simgen import ScenarioSpec, evaluate_regime, generate_scenario
from .value import build_omega, estimate_value

__all__ = [
    "BACKEND", "BalancingWeights", "CohortDataset", "DataError", "DecisionRule", "FitConfig", "FittedRegime",
    "ScenarioSpec", "Trajectory", "balancing_objective", "build_omega", "build_pseudo_outcome",
    "build_stage_sample", "estimate_gamma_gmm", "estimate_value", "evaluate_regime", "fit_multistage",
    "fit_owl_ipw", "fit_parametric_q_learning", "fit_rule", "fit_single_stage", "fit_weighted_spline",
    "generate_scenario", "gram_matrix", "profile_eta", "propensity_eval", "read_cohort_csv",
    "rescale_covariates", "sobolev_kernel", "solve_weights", "tune_balance_params",
]
