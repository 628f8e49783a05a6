"""Distributed nonlinear MPC for automated-vehicle intersection coordination.

Each simulated agent repeatedly solves a nonconvex optimal control problem
(velocity tracking subject to actuation, road and collision-avoidance
constraints) with a PANOC-type solver under a quadratic penalty scheme, and
exchanges its planned trajectory with the other agents over a one-step-delayed
in-process bus.
"""

from .collision import (
    AgentGeometry,
    Box2D,
    Pose2D,
    SafetyParams,
    heading_unit_vector,
    overapprox_bounding_box,
    overlap_area,
    safety_distances,
    safety_region_corners,
)
from .coordination import (
    ConflictSets,
    PriorityMap,
    RegionBoundaries,
    RegionTag,
    active_conflict_set,
    liveness_update,
    preview_constraint_value,
    prioritized_conflict_set,
    region_of,
)
from .kinematics import (
    AgentDynamicsParams,
    AgentState,
    DiscreteModel,
    continuous_matrices,
    discretize_exact,
    make_discrete_model,
    rollout,
)
from .ocp import (
    AgentLimits,
    AgentOcpTemplate,
    ConflictTrajectory,
    CostWeights,
    MissingTrajectory,
    OcpProblem,
    build_problem,
    ca_residuals,
    grad_penalty_cost,
    inequality_residuals,
    penalty_cost,
    stage_cost,
    terminal_cost,
)
from .panoc import (
    BoxSet,
    PenaltyConfig,
    SolverConfig,
    SolverResult,
    fbe_value,
    panoc_solve,
    penalty_outer_loop,
    project_box,
)
from .path_geometry import PathSpline, Waypoint, fit_path_spline
from .scenario import (
    ScenarioConfig,
    bundled_scenario_path,
    load_scenario,
    parse_scenario,
    serialize_scenario,
    write_trace,
)
from .sim import (
    Simulation,
    SimTrace,
    TrajectoryMessage,
    detect_actual_collision,
    message_shift,
    run,
    trace_rows,
)

__version__ = "0.1.0"
