"""Clustering-based average-state observers for directed network systems.

Design pipeline: build (or load) a weighted digraph, assemble the linear flow
system with a measured/unmeasured split, cluster the unmeasured nodes, design
a minimum-order observer for the cluster averages via a structurally relaxed
gain with one scalar tuning parameter, then simulate and score the
estimation error.
"""

__version__ = "0.1.0"

from .clustering import (
    Clustering,
    ProjectedSystem,
    characteristic_matrix,
    cluster_constraint_ok,
    deviation,
    left_pseudo,
    project_system,
    stabilizability_rank_ok,
)
from .graph import (
    Digraph,
    NodePartition,
    erdos_renyi,
    is_weakly_connected,
    max_bipartite_matching,
    neighbor_set_of_measured,
    scale_free,
)
from .numerics import (
    hurwitz_margin,
    integrate_lti,
    lyapunov_gramian,
    numeric_rank,
    pseudoinverse,
)
from .observer import (
    ObserverDesign,
    PhiFamily,
    design_from_gain,
    design_from_target,
    error_matrices,
    h2_cost,
    is_tunable,
    optimal_target,
    scaled_target,
)
from .optimize import (
    DescentConfig,
    NotStabilizableError,
    PhiSearchConfig,
    constrained_clustering,
    coordinate_descent,
    coordinate_descent_with_gain_oracle,
    greedy_clustering,
    phi_search,
)
from .sim import InputSignal, SimResult, random_input, simulate, zeta_percent
from .system import (
    AssumptionReport,
    ClusteredNetworkSystem,
    check_assumptions,
    flow_system_from_graph,
    validate_metzler,
)
