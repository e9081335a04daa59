"""Drivetrain design-space optimization for multi-actuator legged robots.

Selects motors, gear ratios, and actuator-joint couplings from component
libraries by exact binary optimization (minimum joint-space reflected
inertia under task-feasibility, mass-budget, and designer rules), and
characterizes the results: inertia ellipsoids, copper losses, torque and
force capability polytopes, grid studies with Pareto fronts.
"""

from .analysis import (
    CapabilityPolytope,
    CopperLossReport,
    InertiaReport,
    LegKinematics,
    copper_loss,
    force_capability_polytope,
    inertia_report,
    joint_torque_polytope,
    leg_jacobian,
    pareto_front,
)
from .components import (
    ConvexPolygon,
    CouplingSpec,
    GearCandidate,
    Library,
    MotorSpec,
    OperationDomainTemplate,
    build_coupling,
    load_library,
    operation_polygon,
    save_library,
    table_couplings,
)
from .errors import (
    ActuforgeError,
    DegeneratePolygonError,
    DimensionError,
    ParseError,
    SingularConfigurationError,
    SolverLimitError,
    StudyStoreError,
    ValidationError,
)
from .optimizer import (
    BilpModel,
    CandidateCell,
    DesignProblem,
    DesignRule,
    DesignSolution,
    assemble_bilp,
    design_from_solution,
    enumerate_feasible_pairs,
    linearize_product,
    solve,
    solve_bnb,
    solve_mckp,
    solve_over_couplings,
)
from .study import StudyGrid, StudyResult, budget_grid, load, persist, run_grid, summarize
from .tasking import Trajectory, concatenate, load_trajectory, lowpass, save_trajectory, synthesize_harmonic
from .transmission import Design, check_feasibility, joint_space_inertia, project_torques, project_velocities

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
