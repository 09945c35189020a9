"""stratdag: causal discovery and mechanism design against strategic agents.

A population of causally aware agents best-responds to deployed scoring
mechanisms over a structural causal model the principal does not know. The
package simulates that interaction and implements the deploy-and-observe
algorithms that recover the causal graph, identify the structural model and
compute the risk/improvement Pareto front.
"""

from ._backend import backend_name, have_extension
from .agents import (
    BestResponse,
    SolverError,
    best_response_isolation,
    best_response_linear_cost,
    best_response_numeric,
    best_response_quadratic,
    population_best_response,
)
from .costs import CostError, HeteroScale, LinearCost, SeparableCost
from .discovery import (
    DiscoverySession,
    Environment,
    FaithfulnessViolationError,
    ReplayEnvironment,
    SimulatorEnvironment,
    discover_general,
    discover_per_node,
)
from .graphs import CycleError, GraphError, OrientedGraph, Skeleton, oriented_from_dag
from .mechanisms import CustomMechanism, IsolationMechanism, LinearMechanism, unit_mechanism
from .observe import (
    InducedDistribution,
    Registry,
    RegressionModel,
    conditional_shift_test,
    faithfulness_diagnostic,
    fit_conditional,
    induce,
    mean_shift_test,
    natural_distribution,
)
from .pareto import (
    Front,
    InterventionCatalog,
    ParetoPoint,
    explore_linear,
    identify_scm,
    linear_cost_front,
    linear_cost_points,
    min_mse_given_intervention,
    offline_front,
    pareto_filter,
    risk_improvement,
)
from .scm import AdditiveScm, LinearScm, NodeFunction, NoiseSpec, ScmError, chain_scm, intervention

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
