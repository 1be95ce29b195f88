"""Reputation games with commitment types: belief regions, Bayesian dynamics,
band-conditioned deviation strategies and low-payoff equilibrium constructions."""
from importlib import resources

from .game import (
    AssumptionError,
    MixedAction,
    Plan,
    ReputationScenario,
    ScenarioError,
    StageGame,
    best_reply_set,
    commitment_payoff,
    expected_payoff,
    validate_scenario,
)
from .geometry import (
    RegionSpec,
    chi_statistic,
    imperfect_monitoring_bound,
    in_convex_hull,
    in_lambda,
    in_lambda_bar,
    in_lambda_underline,
    prior_likelihood,
    psi_star,
    theta_b_set,
)
from .kernels import BACKEND
from .scenario_io import load_scenario, scenario_from_dict, scenario_to_dict
from .strategies import Machine, MyopicBestReply, StrategyProfile, profile_from_dict

__version__ = "0.1.0"


def data_path(name: str) -> str:
    """Path of a bundled example file (``benchmark.json``, ``perturbed_profile.json``, ...)."""
    return str(resources.files(__name__) / "data" / name)


__all__ = [
    "AssumptionError",
    "BACKEND",
    "Machine",
    "MixedAction",
    "MyopicBestReply",
    "Plan",
    "RegionSpec",
    "ReputationScenario",
    "ScenarioError",
    "StageGame",
    "StrategyProfile",
    "best_reply_set",
    "chi_statistic",
    "commitment_payoff",
    "data_path",
    "expected_payoff",
    "imperfect_monitoring_bound",
    "in_convex_hull",
    "in_lambda",
    "in_lambda_bar",
    "in_lambda_underline",
    "load_scenario",
    "prior_likelihood",
    "profile_from_dict",
    "psi_star",
    "scenario_from_dict",
    "scenario_to_dict",
    "theta_b_set",
    "validate_scenario",
]
