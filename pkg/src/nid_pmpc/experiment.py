"""Ellipse-tracking study: adaptive look-ahead distance versus a one-time choice.

A simulated differential-drive unicycle tracks an ellipse through the
look-ahead-point abstraction.  Two strategies are compared on identical
closed loops:

* a receding-horizon run that re-optimizes the look-ahead distance l and the
  solver horizon dt every control period (full solve at t = 0, a few
  warm-started gradient steps per period after that), and
* a static run that fixes l to the closed-form optimum once and never calls
  the solver.

Everything is deterministic: identical configurations produce bit-identical
logs.  The simulation loop is single-threaded; the two runs of a comparison
are independent and may execute concurrently.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterator, List

import numpy as np

from .kinematics import (
    Pose,
    RobotGeometry,
    SiPoint,
    SiVelocity,
    UnicycleInput,
    WheelSpeeds,
    nid_forward,
    si_to_unicycle,
    static_optimal_l,
    unicycle_to_wheels,
)
from .pmpc import (
    IntegrationDivergedError,
    ParametricDynamics,
    PmpcProblem,
    RunningCost,
    SolverConfig,
    inverse_horizon_cost,
    solve,
)

__all__ = [
    "EllipseReference",
    "ExperimentConfig",
    "LogRow",
    "TrajectoryLog",
    "Metrics",
    "ExperimentDivergedError",
    "reference",
    "si_controller",
    "saturate",
    "pmpc_running_cost",
    "build_pmpc_problem",
    "run_pmpc_experiment",
    "run_static_experiment",
    "compute_metrics",
]

logger = logging.getLogger(__name__)

Array = np.ndarray


@dataclass(frozen=True)
class EllipseReference:
    """r(t) = (a1 cos(rate t), a2 sin(rate t)); rate = 0 gives a constant reference."""

    a1: float = 0.4
    a2: float = 0.2
    rate: float = 0.1

    def __post_init__(self):
        if self.a1 <= 0.0 or self.a2 <= 0.0:
            raise ValueError(f"semi-axes must be > 0, got a1={self.a1}, a2={self.a2}")
        if self.rate < 0.0:
            raise ValueError(f"rate must be >= 0, got {self.rate}")


def _default_geometry() -> RobotGeometry:
    return RobotGeometry(r_w=0.005, l_w=0.03, v_bar=0.1)


def _default_solver() -> SolverConfig:
    # Coarser step, tighter horizon cap, and a smaller iteration budget than
    # the library defaults keep a full-orbit run at desk scale; gradient
    # accuracy at this step is ~1e-4 relative.
    return SolverConfig(ode_step=0.03, dt_min=0.05, dt_max=2.5, max_iters=150)


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one tracking run; defaults give the stock ellipse setup."""

    geometry: RobotGeometry = field(default_factory=_default_geometry)
    reference: EllipseReference = field(default_factory=EllipseReference)
    beta: float = 0.01
    alpha: float = 0.99
    control_period: float = 0.033
    duration: float = 20.0 * math.pi
    solver: SolverConfig = field(default_factory=_default_solver)
    initial_pose: Pose = field(default_factory=lambda: Pose(0.4, 0.0, 0.5 * math.pi))
    initial_l: float = 0.078
    initial_dt: float = 1.0
    l_min: float = 1e-4
    l_max: float = 1.0
    warm_start_steps: int = 3

    def __post_init__(self):
        if not (0.0 < self.beta < 1.0):
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.control_period <= 0.0:
            raise ValueError(f"control_period must be > 0, got {self.control_period}")
        if self.duration < 0.0:
            raise ValueError(f"duration must be >= 0, got {self.duration}")
        if not (0.0 < self.l_min < self.l_max):
            raise ValueError(f"need 0 < l_min < l_max, got [{self.l_min}, {self.l_max}]")
        if not (self.l_min <= self.initial_l <= self.l_max):
            raise ValueError(f"initial_l {self.initial_l} outside [{self.l_min}, {self.l_max}]")
        if not (self.solver.dt_min <= self.initial_dt <= self.solver.dt_max):
            raise ValueError(
                f"initial_dt {self.initial_dt} outside "
                f"[{self.solver.dt_min}, {self.solver.dt_max}]"
            )
        if self.warm_start_steps < 1:
            raise ValueError(f"warm_start_steps must be >= 1, got {self.warm_start_steps}")


@dataclass(frozen=True)
class LogRow:
    """One control period: state, virtual point, reference, decisions, and commands."""

    t: float
    pose: Pose
    x_si: SiPoint
    reference: SiPoint
    l: float
    dt_horizon: float
    v: float
    omega: float
    omega_r: float
    omega_l: float
    tracking_error: float


_COLUMNS = {
    "t": lambda r: r.t,
    "x1": lambda r: r.pose.x1,
    "x2": lambda r: r.pose.x2,
    "theta": lambda r: r.pose.theta,
    "xsi1": lambda r: r.x_si.p1,
    "xsi2": lambda r: r.x_si.p2,
    "r1": lambda r: r.reference.p1,
    "r2": lambda r: r.reference.p2,
    "l": lambda r: r.l,
    "dt_horizon": lambda r: r.dt_horizon,
    "v": lambda r: r.v,
    "omega": lambda r: r.omega,
    "omega_r": lambda r: r.omega_r,
    "omega_l": lambda r: r.omega_l,
    "tracking_error": lambda r: r.tracking_error,
}


@dataclass(frozen=True)
class TrajectoryLog:
    """Time-ordered run record; row times are strictly increasing."""

    rows: List[LogRow]

    def __post_init__(self):
        times = [row.t for row in self.rows]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("log times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[LogRow]:
        return iter(self.rows)

    def column(self, name: str) -> Array:
        getter = _COLUMNS[name]
        return np.array([getter(row) for row in self.rows])


@dataclass(frozen=True)
class Metrics:
    """Trapezoid time-averages over a log, plus the angular-velocity peak."""

    mean_tracking_error: float
    mean_abs_wheel_diff: float
    mean_l: float
    mean_dt: float
    max_abs_omega: float


class ExperimentDivergedError(RuntimeError):
    """Simulated state left the finite floats; ``log`` holds the rows up to that point."""

    def __init__(self, time: float, log: TrajectoryLog):
        self.time = float(time)
        self.log = log
        super().__init__(f"simulated state became non-finite at t = {self.time}")


def reference(t: float, ref: EllipseReference) -> tuple[SiPoint, SiVelocity]:
    """Reference point r(t) on the ellipse and its time derivative."""
    phase = ref.rate * t
    r = SiPoint(ref.a1 * math.cos(phase), ref.a2 * math.sin(phase))
    rdot = SiVelocity(-ref.a1 * ref.rate * math.sin(phase), ref.a2 * ref.rate * math.cos(phase))
    return r, rdot


def si_controller(x_si: SiPoint, t: float, ref: EllipseReference) -> SiVelocity:
    """Proportional-plus-feedforward law (r - x_si) + rdot; contracts the error exponentially."""
    r, rdot = reference(t, ref)
    return SiVelocity(r.p1 - x_si.p1 + rdot.v1, r.p2 - x_si.p2 + rdot.v2)


def saturate(u: SiVelocity, v_bar: float) -> SiVelocity:
    """Scale u down to norm v_bar when it exceeds it; direction is preserved."""
    speed = u.norm()
    if speed <= v_bar:
        return u
    scale = v_bar / speed
    return SiVelocity(u.v1 * scale, u.v2 * scale)


def _loop_terms(
    x1: float, x2: float, theta: float, l: float, t: float, ref: EllipseReference
) -> tuple[float, float, float, float, float, float]:
    """Shared core of the closed-loop expressions: (c, s, u1, u2, v, w).

    (u1, u2) is the unsaturated point-velocity command at the look-ahead point
    of (x1, x2, theta), v the resulting forward speed, w the angular rate.
    """
    phase = ref.rate * t
    r1 = ref.a1 * math.cos(phase)
    r2 = ref.a2 * math.sin(phase)
    rd1 = -ref.a1 * ref.rate * math.sin(phase)
    rd2 = ref.a2 * ref.rate * math.cos(phase)
    c = math.cos(theta)
    s = math.sin(theta)
    u1 = r1 - (x1 + l * c) + rd1
    u2 = r2 - (x2 + l * s) + rd2
    v = c * u1 + s * u2
    w = (-s * u1 + c * u2) / l
    return c, s, u1, u2, v, w


def pmpc_running_cost(
    state: Pose, l: float, t: float, config: ExperimentConfig
) -> tuple[float, Array, float]:
    """Running cost beta (wheel difference)^2 + (1-beta) l^2 with analytic partials.

    Returns (value, d/dstate as shape (3,), d/dl).  The wheel difference is
    (l_w/r_w) times the angular rate the closed-loop command demands at
    ``state``; it vanishes when the command is aligned with the heading.
    beta weights the wheel term: for centimeter-scale geometry the wheel
    difference is rad/s-scale (order 1) while l is meters-scale (order 0.01),
    so a small beta is what actually balances the two facets -- the same
    compensation the static trade-off applies through alpha.
    """
    if l <= 0.0:
        raise ValueError(f"l must be > 0, got {l}")
    geom, beta = config.geometry, config.beta
    k = geom.l_w / geom.r_w
    c, s, u1, u2, v, w = _loop_terms(state.x1, state.x2, state.theta, l, t, config.reference)
    value = beta * (k * w) ** 2 + (1.0 - beta) * l**2
    front = 2.0 * beta * k**2 * w
    d_state = np.array([front * s / l, -front * c / l, -front * (v + l) / l])
    d_l = -front * w / l + 2.0 * (1.0 - beta) * l
    return value, d_state, d_l


def build_pmpc_problem(pose: Pose, t: float, config: ExperimentConfig) -> PmpcProblem:
    """Package the closed-loop tracking dynamics and cost for the parametric solver.

    State is (x1, x2, theta); the single parameter is the look-ahead distance
    l.  The prediction uses the true future reference (the dynamics are
    time-varying through r(t)) and the unsaturated command.
    """
    ref = config.reference
    beta = config.beta
    k = config.geometry.l_w / config.geometry.r_w
    wheel_gain = 2.0 * beta * k**2
    precision_gain = 2.0 * (1.0 - beta)

    # The adjoint sweep evaluates all four derivative callables at the same
    # (x, p, t); a one-slot cache makes them share a single core evaluation.
    cache_key: list = [None, None]

    def core(x: Array, p: Array, s_t: float):
        key = (x[0], x[1], x[2], p[0], s_t)
        if cache_key[0] != key:
            cache_key[0] = key
            cache_key[1] = _loop_terms(x[0], x[1], x[2], p[0], s_t, ref)
        return cache_key[1]

    def f(x: Array, p: Array, s_t: float) -> Array:
        c, s, _, _, v, w = core(x, p, s_t)
        return np.array([v * c, v * s, w])

    def dfdx(x: Array, p: Array, s_t: float) -> Array:
        c, s, _, _, v, w = core(x, p, s_t)
        l = p[0]
        return np.array(
            [
                [-c * c, -c * s, l * w * c - v * s],
                [-c * s, -s * s, l * w * s + v * c],
                [s / l, -c / l, -(v + l) / l],
            ]
        )

    def dfdp(x: Array, p: Array, s_t: float) -> Array:
        c, s, _, _, _, w = core(x, p, s_t)
        return np.array([[-c], [-s], [-w / p[0]]])

    def cost(x: Array, p: Array, s_t: float) -> float:
        _, _, _, _, _, w = core(x, p, s_t)
        l = p[0]
        return beta * (k * w) ** 2 + (1.0 - beta) * l * l

    def cost_dx(x: Array, p: Array, s_t: float) -> Array:
        c, s, _, _, v, w = core(x, p, s_t)
        l = p[0]
        front = wheel_gain * w
        return np.array([front * s / l, -front * c / l, -front * (v + l) / l])

    def cost_dp(x: Array, p: Array, s_t: float) -> Array:
        _, _, _, _, _, w = core(x, p, s_t)
        l = p[0]
        return np.array([-wheel_gain * w * w / l + precision_gain * l])

    dynamics = ParametricDynamics(f=f, dfdx=dfdx, dfdp=dfdp, n=3, m=1)
    running = RunningCost(value=cost, dx=cost_dx, dp=cost_dp)
    return PmpcProblem(
        dynamics=dynamics,
        running_cost=running,
        sampling_cost=inverse_horizon_cost(),
        x0=np.array([pose.x1, pose.x2, pose.theta]),
        t0=float(t),
    )


def _applied_control(
    pose: Pose, l: float, t: float, config: ExperimentConfig
) -> tuple[SiPoint, SiPoint, UnicycleInput, WheelSpeeds, float]:
    """Command actually sent to the robot at (pose, t): saturated, then mapped to wheels."""
    x_si = nid_forward(pose, l)
    r_pt, _ = reference(t, config.reference)
    u_si = saturate(si_controller(x_si, t, config.reference), config.geometry.v_bar)
    u_x = si_to_unicycle(u_si, pose.theta, l)
    wheels = unicycle_to_wheels(u_x, config.geometry)
    err = math.hypot(pose.x1 - r_pt.p1, pose.x2 - r_pt.p2)
    return x_si, r_pt, u_x, wheels, err


_ADVANCE_SUBSTEPS = 4


def _advance(pose: Pose, u: UnicycleInput, period: float) -> Pose:
    """RK4 advance of the unicycle under a zero-order-hold input."""
    x1, x2, theta = pose.x1, pose.x2, pose.theta
    v, omega = u.v, u.omega
    h = period / _ADVANCE_SUBSTEPS
    for _ in range(_ADVANCE_SUBSTEPS):
        k1x = v * math.cos(theta)
        k1y = v * math.sin(theta)
        th2 = theta + 0.5 * h * omega
        k2x = v * math.cos(th2)
        k2y = v * math.sin(th2)
        # stages 2 and 3 coincide: theta' = omega is state-independent
        th4 = theta + h * omega
        k4x = v * math.cos(th4)
        k4y = v * math.sin(th4)
        x1 += (h / 6.0) * (k1x + 4.0 * k2x + k4x)
        x2 += (h / 6.0) * (k1y + 4.0 * k2y + k4y)
        theta += h * omega
    if not (math.isfinite(x1) and math.isfinite(x2) and math.isfinite(theta)):
        raise IntegrationDivergedError(0.0)
    return Pose(x1, x2, theta)


def _make_row(pose: Pose, l: float, dt_horizon: float, t: float, config: ExperimentConfig):
    x_si, r_pt, u_x, wheels, err = _applied_control(pose, l, t, config)
    row = LogRow(
        t=t,
        pose=pose,
        x_si=x_si,
        reference=r_pt,
        l=l,
        dt_horizon=dt_horizon,
        v=u_x.v,
        omega=u_x.omega,
        omega_r=wheels.omega_r,
        omega_l=wheels.omega_l,
        tracking_error=err,
    )
    return row, u_x


def _run_loop(config: ExperimentConfig, adapt: bool) -> TrajectoryLog:
    period = config.control_period
    n_periods = int(math.floor(config.duration / period + 1e-9))

    if adapt:
        solver_cfg = replace(
            config.solver, p_lower=(config.l_min,), p_upper=(config.l_max,)
        )
        warm_cfg = replace(solver_cfg, max_iters=config.warm_start_steps)
        l = min(max(config.initial_l, config.l_min), config.l_max)
        dt = config.initial_dt
    else:
        l = static_optimal_l(config.alpha, config.geometry).l
        dt = 0.0

    pose = config.initial_pose
    rows: List[LogRow] = []
    for k in range(n_periods + 1):
        t = k * period
        if adapt:
            cfg_k = solver_cfg if k == 0 else warm_cfg
            try:
                sol = solve(build_pmpc_problem(pose, t, config), np.array([l]), dt, cfg_k)
                l, dt = float(sol.p_star[0]), sol.dt_star
            except IntegrationDivergedError as exc:
                logger.warning(
                    "solver diverged at t=%.3f (%s); keeping l=%.6g, dt=%.6g", t, exc, l, dt
                )
        row, u_x = _make_row(pose, l, dt, t, config)
        rows.append(row)
        if k % 200 == 0:
            logger.debug("t=%.2f l=%.5f dt=%.3f err=%.5f", t, l, dt, row.tracking_error)
        if k < n_periods:
            try:
                pose = _advance(pose, u_x, period)
            except (IntegrationDivergedError, ValueError):
                raise ExperimentDivergedError(t + period, TrajectoryLog(rows)) from None
    return TrajectoryLog(rows)


def run_pmpc_experiment(config: ExperimentConfig) -> TrajectoryLog:
    """Receding-horizon run: full solve at t = 0, warm-started steps each period after.

    A solver divergence inside a period is logged and the previous (l, dt)
    kept; :class:`ExperimentDivergedError` is raised only if the simulated
    state itself becomes non-finite.
    """
    return _run_loop(config, adapt=True)


def run_static_experiment(config: ExperimentConfig) -> TrajectoryLog:
    """Identical loop with l fixed to the closed-form optimum and no solver calls."""
    return _run_loop(config, adapt=False)


def compute_metrics(log: TrajectoryLog) -> Metrics:
    """Trapezoid time-averages over the log; a single-row log yields its own values."""
    if len(log) == 0:
        raise ValueError("cannot compute metrics of an empty log")
    t = log.column("t")
    err = log.column("tracking_error")
    wheel_diff = np.abs(log.column("omega_r") - log.column("omega_l"))
    l_col = log.column("l")
    dt_col = log.column("dt_horizon")
    omega = log.column("omega")
    if len(log) == 1:
        mean = lambda y: float(y[0])  # noqa: E731 - degenerate zero-length interval
    else:
        span = t[-1] - t[0]
        mean = lambda y: float(np.trapezoid(y, t) / span)  # noqa: E731
    return Metrics(
        mean_tracking_error=mean(err),
        mean_abs_wheel_diff=mean(wheel_diff),
        mean_l=mean(l_col),
        mean_dt=mean(dt_col),
        max_abs_omega=float(np.max(np.abs(omega))),
    )
