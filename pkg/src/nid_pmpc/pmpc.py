"""Variable-horizon parametric MPC solver for ODE-constrained problems.

Optimizes constant system parameters p and the horizon length dt of

    minimize_{p, dt}  integral of L(x(s), p, s) over [t0, t0 + dt]  +  C(dt)
    subject to        x' = f(x, p, t),  x(t0) = x0

by plain gradient descent.  The parameter gradient comes from a backward
sweep of two adjoint variables: the usual costate lam driven by the state
sensitivities, and a parameter accumulator xi whose value at t0 is the full
parameter gradient.  The horizon gradient is the running cost at the end of
the horizon plus the derivative of the horizon penalty.

The integrator is fixed-step classical RK4 in both directions; the running
cost is integrated alongside the state with the same stages, so the cost
quadrature carries the integrator's order.  The descent loop certifies
first-order stationarity only; nothing here checks second-order conditions.

A solve run is strictly sequential.  Problem definitions are immutable and
shareable; independent solves of the same problem may run concurrently as
long as the user-supplied callables are reentrant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "IntegrationDivergedError",
    "ParametricDynamics",
    "RunningCost",
    "SamplingCost",
    "inverse_horizon_cost",
    "PmpcProblem",
    "SolverConfig",
    "ForwardTrajectory",
    "AdjointTrajectories",
    "PmpcSolution",
    "GradientCheckReport",
    "integrate_forward",
    "evaluate_cost",
    "integrate_adjoints",
    "grad_p",
    "grad_dt",
    "solve",
    "check_gradients",
]

Array = np.ndarray


class IntegrationDivergedError(RuntimeError):
    """State became non-finite during integration; ``time`` is the offending instant."""

    def __init__(self, time: float):
        self.time = float(time)
        super().__init__(f"state became non-finite during integration at t = {self.time}")


@dataclass(frozen=True)
class ParametricDynamics:
    """Right-hand side x' = f(x, p, t) with analytic Jacobians.

    ``f`` returns shape (n,), ``dfdx`` shape (n, n), ``dfdp`` shape (n, m).
    All three must be continuously differentiable in x and p; use
    :func:`check_gradients` to validate the Jacobians against finite
    differences.
    """

    f: Callable[[Array, Array, float], Array]
    dfdx: Callable[[Array, Array, float], Array]
    dfdp: Callable[[Array, Array, float], Array]
    n: int
    m: int


@dataclass(frozen=True)
class RunningCost:
    """Integrand L(x, p, t) with gradients ``dx`` of shape (n,) and ``dp`` of shape (m,)."""

    value: Callable[[Array, Array, float], float]
    dx: Callable[[Array, Array, float], Array]
    dp: Callable[[Array, Array, float], Array]


@dataclass(frozen=True)
class SamplingCost:
    """Horizon penalty C(dt) and its derivative, defined for dt > 0."""

    value: Callable[[float], float]
    derivative: Callable[[float], float]


def inverse_horizon_cost() -> SamplingCost:
    """The reciprocal horizon penalty C(dt) = 1/dt, which punishes short horizons."""
    return SamplingCost(value=lambda dt: 1.0 / dt, derivative=lambda dt: -1.0 / dt**2)


@dataclass(frozen=True)
class PmpcProblem:
    """A dynamics / running-cost / horizon-cost triple with its initial condition."""

    dynamics: ParametricDynamics
    running_cost: RunningCost
    sampling_cost: SamplingCost
    x0: Array
    t0: float

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=float)
        if x0.shape != (self.dynamics.n,):
            raise ValueError(
                f"x0 has shape {x0.shape}, expected ({self.dynamics.n},) for this dynamics"
            )
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "t0", float(self.t0))


@dataclass(frozen=True)
class SolverConfig:
    """Step sizes, stopping rule, and box bounds for the descent loop.

    gamma1/gamma2 are the descent step sizes for p and dt.  The loop stops
    when ||grad_p|| + |grad_dt| <= epsilon or after max_iters accepted steps.
    p_lower/p_upper, when given, are per-component box bounds applied after
    every step.  A step that increases the cost is halved up to
    max_step_halvings times before being accepted anyway.
    """

    gamma1: float = 1e-3
    gamma2: float = 1e-2
    epsilon: float = 1e-3
    max_iters: int = 500
    ode_step: float = 1e-3
    dt_min: float = 0.05
    dt_max: float = 5.0
    p_lower: Optional[Sequence[float]] = None
    p_upper: Optional[Sequence[float]] = None
    max_step_halvings: int = 10

    def __post_init__(self):
        for name in ("gamma1", "gamma2", "epsilon", "ode_step", "dt_min", "dt_max"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.dt_min >= self.dt_max:
            raise ValueError(f"dt_min must be < dt_max, got [{self.dt_min}, {self.dt_max}]")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")


@dataclass(frozen=True)
class ForwardTrajectory:
    """State samples x (K, n) on the time grid t (K,) produced by integrate_forward."""

    t: Array
    x: Array


@dataclass(frozen=True)
class AdjointTrajectories:
    """Forward state plus backward adjoints on one grid.

    ``lam`` (K, n) and ``xi`` (K, m) carry exact zeros in their final rows:
    the terminal conditions are imposed, not integrated.
    """

    t: Array
    x: Array
    lam: Array
    xi: Array


@dataclass(frozen=True)
class PmpcSolution:
    """Best iterate of a descent run plus its convergence record."""

    p_star: Array
    dt_star: float
    iterations: int
    final_grad_norm: float
    cost_trace: Array
    converged: bool


@dataclass(frozen=True)
class GradientCheckReport:
    """Analytic-vs-central-difference comparison for grad_p and grad_dt.

    ``p_errors`` and ``dt_error`` are |analytic - fd| / max(|fd|, 1e-3), so a
    value below 1e-3 means the analytic gradient is within 0.1% relative or
    1e-6 absolute of the finite difference.
    """

    analytic_p: Array
    fd_p: Array
    p_errors: Array
    analytic_dt: float
    fd_dt: float
    dt_error: float

    @property
    def max_error(self) -> float:
        worst_p = float(np.max(self.p_errors)) if self.p_errors.size else 0.0
        return max(worst_p, self.dt_error)


def _time_grid(t0: float, dt: float, step: float) -> Array:
    """Uniform grid over [t0, t0 + dt]; the last step shrinks to land exactly on t0 + dt."""
    if dt <= 0.0:
        raise ValueError(f"horizon must be > 0, got {dt}")
    n_full = int(np.floor(dt / step + 1e-9))
    remainder = dt - n_full * step
    grid = t0 + step * np.arange(n_full + 1)
    if remainder > 1e-12 * max(1.0, abs(dt)):
        grid = np.append(grid, t0 + dt)
    else:
        grid[-1] = t0 + dt
    if grid.size < 2:
        grid = np.array([t0, t0 + dt])
    return grid


def _forward_with_cost(
    problem: PmpcProblem, p: Array, dt: float, config: SolverConfig
) -> tuple[ForwardTrajectory, float]:
    """RK4 sweep of the state with the running cost integrated as an extra state."""
    f = problem.dynamics.f
    cost = problem.running_cost.value
    grid = _time_grid(problem.t0, dt, config.ode_step)
    n_nodes = grid.size
    x = np.empty((n_nodes, problem.dynamics.n))
    x[0] = problem.x0
    total = 0.0
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for i in range(n_nodes - 1):
            t = grid[i]
            h = grid[i + 1] - t
            xi_ = x[i]
            tm = t + 0.5 * h
            k1 = f(xi_, p, t)
            c1 = cost(xi_, p, t)
            x2 = xi_ + (0.5 * h) * k1
            k2 = f(x2, p, tm)
            c2 = cost(x2, p, tm)
            x3 = xi_ + (0.5 * h) * k2
            k3 = f(x3, p, tm)
            c3 = cost(x3, p, tm)
            x4 = xi_ + h * k3
            k4 = f(x4, p, t + h)
            c4 = cost(x4, p, t + h)
            x_next = xi_ + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(x_next)):
                raise IntegrationDivergedError(grid[i + 1])
            x[i + 1] = x_next
            total += (h / 6.0) * (c1 + 2.0 * c2 + 2.0 * c3 + c4)
    return ForwardTrajectory(t=grid, x=x), total


def integrate_forward(
    problem: PmpcProblem, p: Array, dt: float, config: SolverConfig
) -> ForwardTrajectory:
    """Integrate x' = f(x, p, t) from x0 over [t0, t0 + dt] with fixed-step RK4.

    Raises :class:`IntegrationDivergedError` if the state leaves the finite
    floats, naming the offending grid time.
    """
    p = np.atleast_1d(np.asarray(p, dtype=float))
    traj, _ = _forward_with_cost(problem, p, float(dt), config)
    return traj


def evaluate_cost(problem: PmpcProblem, p: Array, dt: float, config: SolverConfig) -> float:
    """Total cost: running cost integrated along the forward trajectory plus C(dt)."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    dt = float(dt)
    _, running = _forward_with_cost(problem, p, dt, config)
    return running + problem.sampling_cost.value(dt)


def integrate_adjoints(
    problem: PmpcProblem,
    p: Array,
    dt: float,
    forward: ForwardTrajectory,
    config: SolverConfig,
) -> AdjointTrajectories:
    """Backward RK4 sweep of the costate lam and the parameter accumulator xi.

    lam' = -dLdx^T - dfdx^T lam and xi' = -dLdp^T - dfdp^T lam, integrated
    from exact zeros at t0 + dt down to t0.  The stored state is interpolated
    linearly at stage midpoints; the grid must be exactly the one produced by
    integrate_forward for the same (p, dt, config).
    """
    p = np.atleast_1d(np.asarray(p, dtype=float))
    dt = float(dt)
    expected = _time_grid(problem.t0, dt, config.ode_step)
    if forward.t.shape != expected.shape or not np.array_equal(forward.t, expected):
        raise ValueError("forward trajectory grid does not match this (dt, ode_step)")

    dyn = problem.dynamics
    run = problem.running_cost
    n, m = dyn.n, dyn.m
    grid, xs = forward.t, forward.x
    n_nodes = grid.size
    lam = np.zeros((n_nodes, n))
    xi = np.zeros((n_nodes, m))

    def point_data(x_pt: Array, t_pt: float):
        a_t = np.asarray(dyn.dfdx(x_pt, p, t_pt), dtype=float).T
        b_t = np.asarray(dyn.dfdp(x_pt, p, t_pt), dtype=float).T
        lx = np.asarray(run.dx(x_pt, p, t_pt), dtype=float).reshape(n)
        lp = np.asarray(run.dp(x_pt, p, t_pt), dtype=float).reshape(m)
        return a_t, b_t, lx, lp

    def rhs(data, lam_s):
        a_t, b_t, lx, lp = data
        dlam = -(lx + a_t @ lam_s)
        dxi = -(lp + b_t @ lam_s)
        return dlam, dxi

    data_hi = point_data(xs[-1], grid[-1])
    for i in range(n_nodes - 1, 0, -1):
        t_hi, t_lo = grid[i], grid[i - 1]
        h = t_lo - t_hi  # negative: marching backward
        x_mid = 0.5 * (xs[i] + xs[i - 1])
        data_mid = point_data(x_mid, t_hi + 0.5 * h)
        data_lo = point_data(xs[i - 1], t_lo)
        l0, q0 = lam[i], xi[i]
        dl1, dq1 = rhs(data_hi, l0)
        dl2, dq2 = rhs(data_mid, l0 + (0.5 * h) * dl1)
        dl3, dq3 = rhs(data_mid, l0 + (0.5 * h) * dl2)
        dl4, dq4 = rhs(data_lo, l0 + h * dl3)
        lam[i - 1] = l0 + (h / 6.0) * (dl1 + 2.0 * dl2 + 2.0 * dl3 + dl4)
        xi[i - 1] = q0 + (h / 6.0) * (dq1 + 2.0 * dq2 + 2.0 * dq3 + dq4)
        data_hi = data_lo

    return AdjointTrajectories(t=grid, x=xs, lam=lam, xi=xi)


def grad_p(adjoints: AdjointTrajectories) -> Array:
    """Parameter gradient of the total cost: the accumulator xi evaluated at t0."""
    return adjoints.xi[0].copy()


def grad_dt(problem: PmpcProblem, p: Array, dt: float, forward: ForwardTrajectory) -> float:
    """Horizon gradient: running cost at the end of the horizon plus C'(dt)."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    dt = float(dt)
    t_end = forward.t[-1]
    value = problem.running_cost.value(forward.x[-1], p, t_end)
    return float(value) + problem.sampling_cost.derivative(dt)


def _clip_p(p: Array, config: SolverConfig) -> Array:
    if config.p_lower is not None or config.p_upper is not None:
        lo = -np.inf if config.p_lower is None else np.asarray(config.p_lower, dtype=float)
        hi = np.inf if config.p_upper is None else np.asarray(config.p_upper, dtype=float)
        return np.clip(p, lo, hi)
    return p


def solve(
    problem: PmpcProblem,
    initial_p: Array,
    initial_dt: float,
    config: SolverConfig,
) -> PmpcSolution:
    """Gradient descent on (p, dt) until stationarity or max_iters.

    Each iteration runs one forward and one backward sweep, steps
    p <- p - gamma1 * grad_p and dt <- dt - gamma2 * grad_dt, clips dt to
    [dt_min, dt_max] and p to its box, and halves an uphill step up to
    max_step_halvings times before accepting it.  Non-convergence is not an
    error: the best iterate seen is returned with ``converged=False``.
    """
    p = _clip_p(np.atleast_1d(np.asarray(initial_p, dtype=float)).copy(), config)
    dt = float(initial_dt)
    if not (config.dt_min <= dt <= config.dt_max):
        raise ValueError(
            f"initial_dt {dt} outside horizon bounds [{config.dt_min}, {config.dt_max}]"
        )

    forward, running = _forward_with_cost(problem, p, dt, config)
    cost = running + problem.sampling_cost.value(dt)
    trace = [cost]
    best_p, best_dt, best_cost = p.copy(), dt, cost
    iterations = 0
    converged = False
    grad_norm = np.inf

    while True:
        adj = integrate_adjoints(problem, p, dt, forward, config)
        gp = grad_p(adj)
        gdt = grad_dt(problem, p, dt, forward)
        grad_norm = float(np.linalg.norm(gp)) + abs(gdt)
        if grad_norm <= config.epsilon:
            converged = True
            break
        if iterations >= config.max_iters:
            break

        step_p = config.gamma1 * gp
        step_dt = config.gamma2 * gdt
        for halving in range(config.max_step_halvings + 1):
            p_new = _clip_p(p - step_p, config)
            dt_new = float(np.clip(dt - step_dt, config.dt_min, config.dt_max))
            forward_new, running_new = _forward_with_cost(problem, p_new, dt_new, config)
            cost_new = running_new + problem.sampling_cost.value(dt_new)
            if cost_new <= cost + 1e-12 or halving == config.max_step_halvings:
                break
            step_p = 0.5 * step_p
            step_dt = 0.5 * step_dt

        p, dt, forward, cost = p_new, dt_new, forward_new, cost_new
        trace.append(cost)
        iterations += 1
        if cost < best_cost:
            best_p, best_dt, best_cost = p.copy(), dt, cost

    return PmpcSolution(
        p_star=best_p,
        dt_star=best_dt,
        iterations=iterations,
        final_grad_norm=grad_norm,
        cost_trace=np.array(trace),
        converged=converged,
    )


def check_gradients(
    problem: PmpcProblem, p: Array, dt: float, config: SolverConfig
) -> GradientCheckReport:
    """Compare the adjoint gradients against central differences of evaluate_cost.

    Differencing steps are 1e-5 * max(1, |value|) per component.  See
    :class:`GradientCheckReport` for the error scaling.
    """
    p = np.atleast_1d(np.asarray(p, dtype=float))
    dt = float(dt)
    forward = integrate_forward(problem, p, dt, config)
    adj = integrate_adjoints(problem, p, dt, forward, config)
    analytic_p = grad_p(adj)
    analytic_dt = grad_dt(problem, p, dt, forward)

    fd_p = np.empty_like(analytic_p)
    for i in range(p.size):
        h = 1e-5 * max(1.0, abs(p[i]))
        p_hi, p_lo = p.copy(), p.copy()
        p_hi[i] += h
        p_lo[i] -= h
        fd_p[i] = (
            evaluate_cost(problem, p_hi, dt, config) - evaluate_cost(problem, p_lo, dt, config)
        ) / (2.0 * h)
    h = 1e-5 * max(1.0, abs(dt))
    fd_dt = (
        evaluate_cost(problem, p, dt + h, config) - evaluate_cost(problem, p, dt - h, config)
    ) / (2.0 * h)

    scale_p = np.maximum(np.abs(fd_p), 1e-3)
    p_errors = np.abs(analytic_p - fd_p) / scale_p
    dt_error = abs(analytic_dt - fd_dt) / max(abs(fd_dt), 1e-3)
    return GradientCheckReport(
        analytic_p=analytic_p,
        fd_p=fd_p,
        p_errors=p_errors,
        analytic_dt=float(analytic_dt),
        fd_dt=float(fd_dt),
        dt_error=float(dt_error),
    )
