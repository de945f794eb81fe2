"""Congestion games with traffic lights: equilibria, Braess' paradox and light cycles."""

from .costs import (
    Affine, Blocking, Constant, CostError, EdgeCost, LightCycle, Polynomial,
    SimpleExponential, SumoFitted, Zero, eval_cost, eval_fitted_journey,
    integral_cost, marginal_cost,
)
from .network import (
    Edge, Network, NetworkError, Population, enumerate_paths, is_series_parallel,
    max_sp_subgraph, place_lights, validate_network,
)
from .io import load_network, network_from_dict, network_to_dict
from .equilibrium import (
    EquilibriumResult, FlowDistribution, SolverConfig, best_response,
    price_of_anarchy, relative_gap, social_cost, solve_so, solve_tlue,
)

__version__ = "0.1.0"
