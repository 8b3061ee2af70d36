"""Learning-guided reoptimization of capacitated vehicle routing instances.

Pipeline: perturb an instance's demands, learn which edges of the old
solution survive reoptimization, fix the confident ones, contract the
fixed sequences, and re-solve the reduced problem.
"""

from .instance import (
    DemandDistribution,
    Instance,
    InstanceFormatError,
    Scenario,
    distance,
    distance_matrix,
    parse_instance,
    perturb,
    resolve_delta,
    write_instance,
)
from .solver import (
    Route,
    Segment,
    Solution,
    best_of_k,
    brute_force_optimal,
    improve,
    make_segment,
    make_solution,
    route_cost,
    savings_construct,
    verify_solution,
)
from .features import (
    EdgeSample,
    Dataset,
    Scaler,
    build_dataset,
    edge_key,
    extract_features,
    make_labels,
    similarity,
    solution_edges,
)
from .classifier import Network, TrainConfig, init_network, predict, predict_proba, train
from .edgefix import (
    ContractedInstance,
    FixedGraph,
    SolveConfig,
    build_fixed_graph,
    contract,
    edge_flow,
    fix_and_solve,
    resolve_infeasibility,
    sanitize,
)
from .harness import ScenarioGrid, GridConfig, confusion_metrics, gap, render_report, run_grid

__all__ = [
    "DemandDistribution",
    "Instance",
    "InstanceFormatError",
    "Scenario",
    "distance",
    "distance_matrix",
    "parse_instance",
    "perturb",
    "resolve_delta",
    "write_instance",
    "Route",
    "Segment",
    "Solution",
    "best_of_k",
    "brute_force_optimal",
    "improve",
    "make_segment",
    "make_solution",
    "route_cost",
    "savings_construct",
    "verify_solution",
]

__version__ = "0.1.0"
