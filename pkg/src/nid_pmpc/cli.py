"""Command-line front end: run simulations, compare strategies, verify gradients.

Subcommands::

    nid-pmpc simulate --mode {pmpc|static} [--config FILE] --out PREFIX
    nid-pmpc compare  [--config FILE] --out PREFIX
    nid-pmpc check-gradients [--config FILE]

Configuration files are flat ``key = value`` text with ``#`` comments; every
key has a default, so all subcommands run without a config file.  Trajectory
and metrics outputs are CSV with floats printed in shortest round-trip form,
so identical runs produce byte-identical files and parsing a file recovers
the exact binary values.

The ``NID_PMPC_LOG`` environment variable (quiet, info, debug) controls
diagnostics on standard error.

Exit codes: 0 success, 1 invalid configuration, 2 output I/O failure,
3 simulation divergence (partial trajectory still written), 4 gradient
check failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from typing import Optional, Sequence

import numpy as np

from .experiment import (
    EllipseReference,
    ExperimentConfig,
    ExperimentDivergedError,
    LogRow,
    Metrics,
    TrajectoryLog,
    build_pmpc_problem,
    compute_metrics,
    run_pmpc_experiment,
    run_static_experiment,
)
from .kinematics import Pose, RobotGeometry, SiPoint
from .pmpc import (
    ParametricDynamics,
    PmpcProblem,
    RunningCost,
    SolverConfig,
    check_gradients,
    inverse_horizon_cost,
)

__all__ = [
    "ConfigError",
    "load_config",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "write_metrics_csv",
    "main",
    "entry",
]

logger = logging.getLogger(__name__)

TRAJECTORY_HEADER = "t,x1,x2,theta,xsi1,xsi2,r1,r2,l,dt,v,omega,omega_r,omega_l,err"
METRICS_HEADER = "mean_tracking_error,mean_abs_wheel_diff,mean_l,mean_dt,max_abs_omega"
SUMMARY_HEADER = "mode," + METRICS_HEADER + ",winner"

GRADIENT_TOLERANCE = 1e-3


class ConfigError(Exception):
    """Invalid configuration: carries the offending field and the constraint."""


_CONFIG_DEFAULTS: dict[str, float | int] = {
    "r_w": 0.005,
    "l_w": 0.03,
    "v_bar": 0.1,
    "a1": 0.4,
    "a2": 0.2,
    "rate": 0.1,
    "beta": 0.01,
    "alpha": 0.99,
    "control_period": 0.033,
    "duration": 20.0 * math.pi,
    "warm_start_steps": 3,
    "gamma1": 0.001,
    "gamma2": 0.01,
    "epsilon": 1e-3,
    "max_iters": 150,
    "ode_step": 0.03,
    "dt_min": 0.05,
    "dt_max": 2.5,
    "l_min": 1e-4,
    "l_max": 1.0,
    "initial_l": 0.078,
    "initial_dt": 1.0,
    "initial_x1": 0.4,
    "initial_x2": 0.0,
    "initial_theta": 0.5 * math.pi,
}
_INT_KEYS = {"warm_start_steps", "max_iters"}


def _parse_config_text(text: str, source: str) -> dict[str, float | int]:
    values = dict(_CONFIG_DEFAULTS)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in values:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = int(value) if key in _INT_KEYS else float(value)
        except ValueError:
            kind = "an integer" if key in _INT_KEYS else "a number"
            raise ConfigError(f"{source}:{lineno}: {key} must be {kind}, got {value!r}") from None
    return values


def load_config(path: Optional[str]) -> ExperimentConfig:
    """Build an ExperimentConfig from a key=value file; ``None`` means all defaults."""
    if path is None:
        values = dict(_CONFIG_DEFAULTS)
    else:
        try:
            with open(path, "r", encoding="utf-8") as handle:
                text = handle.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path!r}: {exc}") from None
        values = _parse_config_text(text, path)
    try:
        return ExperimentConfig(
            geometry=RobotGeometry(values["r_w"], values["l_w"], values["v_bar"]),
            reference=EllipseReference(values["a1"], values["a2"], values["rate"]),
            beta=values["beta"],
            alpha=values["alpha"],
            control_period=values["control_period"],
            duration=values["duration"],
            solver=SolverConfig(
                gamma1=values["gamma1"],
                gamma2=values["gamma2"],
                epsilon=values["epsilon"],
                max_iters=int(values["max_iters"]),
                ode_step=values["ode_step"],
                dt_min=values["dt_min"],
                dt_max=values["dt_max"],
            ),
            initial_pose=Pose(values["initial_x1"], values["initial_x2"], values["initial_theta"]),
            initial_l=values["initial_l"],
            initial_dt=values["initial_dt"],
            l_min=values["l_min"],
            l_max=values["l_max"],
            warm_start_steps=int(values["warm_start_steps"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _fmt(value: float) -> str:
    return repr(float(value))


def format_trajectory_csv(log: TrajectoryLog) -> str:
    lines = [TRAJECTORY_HEADER]
    for r in log:
        lines.append(
            ",".join(
                _fmt(v)
                for v in (
                    r.t,
                    r.pose.x1,
                    r.pose.x2,
                    r.pose.theta,
                    r.x_si.p1,
                    r.x_si.p2,
                    r.reference.p1,
                    r.reference.p2,
                    r.l,
                    r.dt_horizon,
                    r.v,
                    r.omega,
                    r.omega_r,
                    r.omega_l,
                    r.tracking_error,
                )
            )
        )
    return "\n".join(lines) + "\n"


def write_trajectory_csv(path: str, log: TrajectoryLog) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(format_trajectory_csv(log))


def read_trajectory_csv(path: str) -> TrajectoryLog:
    """Parse a trajectory CSV back into a TrajectoryLog, bit-exact on every field."""
    with open(path, "r", encoding="utf-8") as handle:
        lines = handle.read().splitlines()
    if not lines or lines[0] != TRAJECTORY_HEADER:
        raise ValueError(f"{path}: not a trajectory CSV (bad header)")
    rows = []
    for line in lines[1:]:
        if not line:
            continue
        vals = [float(field) for field in line.split(",")]
        if len(vals) != 15:
            raise ValueError(f"{path}: expected 15 fields, got {len(vals)}")
        rows.append(
            LogRow(
                t=vals[0],
                pose=Pose(vals[1], vals[2], vals[3]),
                x_si=SiPoint(vals[4], vals[5]),
                reference=SiPoint(vals[6], vals[7]),
                l=vals[8],
                dt_horizon=vals[9],
                v=vals[10],
                omega=vals[11],
                omega_r=vals[12],
                omega_l=vals[13],
                tracking_error=vals[14],
            )
        )
    return TrajectoryLog(rows)


def _metrics_row(metrics: Metrics) -> str:
    return ",".join(
        _fmt(v)
        for v in (
            metrics.mean_tracking_error,
            metrics.mean_abs_wheel_diff,
            metrics.mean_l,
            metrics.mean_dt,
            metrics.max_abs_omega,
        )
    )


def write_metrics_csv(path: str, metrics: Metrics) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(METRICS_HEADER + "\n" + _metrics_row(metrics) + "\n")


def _run_mode(mode: str, config: ExperimentConfig) -> TrajectoryLog:
    if mode == "pmpc":
        return run_pmpc_experiment(config)
    return run_static_experiment(config)


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    status = 0
    try:
        log = _run_mode(args.mode, config)
    except ExperimentDivergedError as exc:
        logger.warning("simulation diverged at t=%.3f; writing partial log", exc.time)
        log = exc.log
        status = 3
    try:
        write_trajectory_csv(f"{args.out}_trajectory.csv", log)
        if len(log):
            write_metrics_csv(f"{args.out}_metrics.csv", compute_metrics(log))
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return 2
    return status


def cmd_compare(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    results: dict[str, Metrics] = {}
    try:
        for mode in ("pmpc", "static"):
            try:
                log = _run_mode(mode, config)
            except ExperimentDivergedError as exc:
                logger.warning("%s run diverged at t=%.3f; partial log written", mode, exc.time)
                write_trajectory_csv(f"{args.out}_{mode}_trajectory.csv", exc.log)
                return 3
            write_trajectory_csv(f"{args.out}_{mode}_trajectory.csv", log)
            metrics = compute_metrics(log)
            write_metrics_csv(f"{args.out}_{mode}_metrics.csv", metrics)
            results[mode] = metrics
        winner = (
            "pmpc"
            if results["pmpc"].mean_tracking_error < results["static"].mean_tracking_error
            else "static"
        )
        lines = [SUMMARY_HEADER]
        for mode in ("pmpc", "static"):
            lines.append(f"{mode},{_metrics_row(results[mode])},{winner}")
        with open(f"{args.out}_summary.csv", "w", encoding="utf-8", newline="") as handle:
            handle.write("\n".join(lines) + "\n")
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return 2
    print(
        "winner: {} (mean tracking error pmpc={} static={})".format(
            winner,
            _fmt(results["pmpc"].mean_tracking_error),
            _fmt(results["static"].mean_tracking_error),
        )
    )
    return 0


def _scalar_test_problem() -> tuple[PmpcProblem, np.ndarray, float, SolverConfig]:
    """Scalar growth problem with a known closed form, for gradient self-tests."""
    dynamics = ParametricDynamics(
        f=lambda x, p, t: p * x,
        dfdx=lambda x, p, t: np.array([[p[0]]]),
        dfdp=lambda x, p, t: np.array([[x[0]]]),
        n=1,
        m=1,
    )
    running = RunningCost(
        value=lambda x, p, t: x[0] ** 2,
        dx=lambda x, p, t: np.array([2.0 * x[0]]),
        dp=lambda x, p, t: np.array([0.0]),
    )
    problem = PmpcProblem(dynamics, running, inverse_horizon_cost(), np.array([1.0]), 0.0)
    config = SolverConfig(ode_step=1e-3, dt_min=0.05, dt_max=5.0)
    return problem, np.array([1.0]), 1.0, config


def cmd_check_gradients(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    checks = []
    scalar_problem, p0, dt0, scalar_cfg = _scalar_test_problem()
    checks.append(("scalar-exponential", scalar_problem, p0, dt0, scalar_cfg, ["dJ/dp[0]"]))

    ellipse = build_pmpc_problem(config.initial_pose, 0.0, config)
    if args.corrupt_dfdp:
        clean = ellipse.dynamics.dfdp
        broken = ParametricDynamics(
            f=ellipse.dynamics.f,
            dfdx=ellipse.dynamics.dfdx,
            dfdp=lambda x, p, t: clean(x, p, t) + 0.05,
            n=3,
            m=1,
        )
        ellipse = PmpcProblem(
            broken, ellipse.running_cost, ellipse.sampling_cost, ellipse.x0, ellipse.t0
        )
    checks.append(
        ("ellipse", ellipse, np.array([config.initial_l]), config.initial_dt, config.solver,
         ["dJ/dl"])
    )

    worst = 0.0
    for name, problem, p, dt, cfg, p_labels in checks:
        report = check_gradients(problem, p, dt, cfg)
        for i, label in enumerate(p_labels):
            print(
                f"{name:20s} {label:9s} analytic={report.analytic_p[i]: .9e} "
                f"fd={report.fd_p[i]: .9e} error={report.p_errors[i]:.3e}"
            )
        print(
            f"{name:20s} {'dJ/ddt':9s} analytic={report.analytic_dt: .9e} "
            f"fd={report.fd_dt: .9e} error={report.dt_error:.3e}"
        )
        worst = max(worst, report.max_error)
    if worst < GRADIENT_TOLERANCE:
        print(f"all gradient checks passed (worst error {worst:.3e} < {GRADIENT_TOLERANCE})")
        return 0
    print(f"gradient check FAILED (worst error {worst:.3e} >= {GRADIENT_TOLERANCE})")
    return 4


_LOG_LEVELS = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    level_name = os.environ.get("NID_PMPC_LOG", "quiet").lower()
    level = _LOG_LEVELS.get(level_name, logging.WARNING)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("nid_pmpc")
    root.handlers[:] = [handler]
    root.setLevel(level)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nid-pmpc",
        description="Differential-drive tracking with an adaptive look-ahead distance",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one tracking simulation and write CSV logs")
    sim.add_argument("--mode", choices=("pmpc", "static"), required=True)
    sim.add_argument("--config", default=None, help="key=value config file (defaults built in)")
    sim.add_argument("--out", required=True, help="output path prefix")
    sim.set_defaults(func=cmd_simulate)

    cmp_ = sub.add_parser("compare", help="run both modes and write a comparison summary")
    cmp_.add_argument("--config", default=None)
    cmp_.add_argument("--out", required=True)
    cmp_.set_defaults(func=cmd_compare)

    chk = sub.add_parser("check-gradients", help="verify analytic gradients against finite differences")
    chk.add_argument("--config", default=None)
    chk.add_argument(
        "--corrupt-dfdp",
        action="store_true",
        help="deliberately bias the parameter Jacobian (negative control; must fail)",
    )
    chk.set_defaults(func=cmd_check_gradients)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    args = _build_parser().parse_args(argv)
    return args.func(args)


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
