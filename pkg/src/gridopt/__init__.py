"""gridopt: cost-effective transmission network design.

Convex conductance optimization (expected resistive loss plus linear build
cost), non-convex structure selection by annealed smoothing with
majorization-minimization, and robustness to line/generator failures via a
Gibbs soft-max of failure-scenario losses.
"""

from .convex import BarrierSettings, ConvexSolveResult, solve_convex
from .errors import (
    DisconnectedNetworkError,
    GridoptError,
    InfeasibleRobustnessError,
    NumericalSingularityError,
    ScenarioValidationError,
)
from .network import (
    CONSUMER,
    GENERATOR,
    TRANSMISSION,
    VIRTUAL_GENERATOR,
    CostModel,
    CurrentMoment,
    Edge,
    LoadModel,
    NetworkTopology,
    Node,
    augment_virtual_generator,
    build_grid_network,
    consumer_loads,
    induced_subnetwork,
    moment_with_single_source,
    single_generator_moment,
)
from .oracles import (
    BruteForceResult,
    OracleReport,
    brute_force_design,
    connectivity_certify,
    finite_difference_gradient,
    finite_difference_jacobian,
    optimal_dispatch_oracle,
)
from .render import render_svg
from .resistive import (
    ExpectedLoss,
    ac_dc_loss,
    conductance_matrix,
    expected_loss,
    loss_gradient,
    loss_hessian,
    loss_on_support,
    solve_potentials,
)
from .robust import (
    FailureScenario,
    RobustSettings,
    SoftmaxScenarioLoss,
    design_robust,
    failable_mask,
    scenario_loss,
    softmax_loss,
    softmax_loss_gradient,
    worst_case_loss,
)
from .scenario import (
    DesignArtifact,
    Scenario,
    build_problem,
    canonical_json,
    parse_scenario,
    run_design,
    save_scenario,
)
from .sparse import (
    AnnealSchedule,
    MMRecord,
    SparseDesignResult,
    descent_violations,
    design_sparse,
    mm_reweight,
    mm_stage,
    smoothed_step,
)

__version__ = "0.1.0"
