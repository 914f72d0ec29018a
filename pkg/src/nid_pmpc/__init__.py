"""Look-ahead-point abstraction for differential-drive robots with a variable-horizon parametric MPC."""

from .kinematics import (
    NidParam,
    Pose,
    RobotGeometry,
    SiPoint,
    SiVelocity,
    UnicycleInput,
    WheelSpeeds,
    forward_sum_bound,
    nid_forward,
    rl_matrix,
    rl_matrix_inverse,
    si_to_unicycle,
    static_cost,
    static_optimal_l,
    unicycle_derivative,
    unicycle_to_wheels,
    wheel_diff_bound,
    wheels_to_unicycle,
)
from .pmpc import (
    AdjointTrajectories,
    ForwardTrajectory,
    GradientCheckReport,
    IntegrationDivergedError,
    ParametricDynamics,
    PmpcProblem,
    PmpcSolution,
    RunningCost,
    SamplingCost,
    SolverConfig,
    check_gradients,
    evaluate_cost,
    grad_dt,
    grad_p,
    integrate_adjoints,
    integrate_forward,
    inverse_horizon_cost,
    solve,
)
from .experiment import (
    EllipseReference,
    ExperimentConfig,
    ExperimentDivergedError,
    LogRow,
    Metrics,
    TrajectoryLog,
    build_pmpc_problem,
    compute_metrics,
    pmpc_running_cost,
    reference,
    run_pmpc_experiment,
    run_static_experiment,
    saturate,
    si_controller,
)

__version__ = "0.1.0"
