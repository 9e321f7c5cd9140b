"""Bayesian optimization for maximizer identification under transition constraints."""

from .continuous import LinearSystem, run_continuous_campaign
from .errors import IllConditionedError, InfeasibleError, OptimumIdentified
from .kernels import Kernel
from .mdp import FiniteMdp, grid_mdp, solve_dp, visitation_of_policy
from .objective import AdaptiveObjective, DesignSpace, utility, utility_gradient
from .planner import CampaignConfig, FwConfig, MixturePolicy, fw_plan, run_campaign
from .surrogate import NoiseModel, Surrogate, build_nystrom

__all__ = [
    "AdaptiveObjective", "CampaignConfig", "DesignSpace", "FiniteMdp", "FwConfig",
    "IllConditionedError", "InfeasibleError", "Kernel", "LinearSystem", "MixturePolicy",
    "NoiseModel", "OptimumIdentified", "Surrogate", "build_nystrom", "fw_plan", "grid_mdp",
    "run_campaign", "run_continuous_campaign", "solve_dp", "utility", "utility_gradient",
    "visitation_of_policy",
]
