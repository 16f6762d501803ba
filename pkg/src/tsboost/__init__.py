"""Boosting approximate transshipment solvers to (1 + eps) accuracy."""
from __future__ import annotations

from .boosting import (
    DUAL_ONLY,
    PRIMAL_DUAL,
    DualCertificate,
    FlowCertificate,
    GuessState,
    SolveReport,
    binary_search_solve,
    boost_fixed_guess,
    full_solve,
    reduce_residual,
    round_bound,
    route_on_tree_repair,
)
from .errors import *  # noqa: F401,F403
from .exact import ExactSolution, exact_preconditioner, exact_transshipment, opt_cost, solve_demand
from .graph import (
    TransshipmentInstance,
    WeightedGraph,
    apply_incidence,
    apply_incidence_transpose,
    dual_infeasibility,
    dual_objective,
    flow_cost,
    is_proper,
    minimum_spanning_tree,
    unit_edge_demand,
    validate_instance,
)
from .handles import PreconditionerHandle, PreconditionerOutput
from .mw import MwConfig, canonical_mw, feasibility_mw, smax, smax_gradient
from .preconditioners import (
    CostApproximator,
    EmbeddedInstance,
    SpanningTree,
    TreeEmbedding,
    approximator_alpha_certificate,
    approximator_dual,
    approximator_preconditioner,
    build_grid_approximator,
    embed_coordinates,
    grid_preconditioner,
    mst_tree,
    tree_preconditioner,
    tree_solve,
    tree_stretch,
)

__version__ = "0.1.0"
