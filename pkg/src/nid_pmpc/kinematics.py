"""Unicycle and differential-drive kinematics built around a look-ahead point.

Steering a planar unicycle through the point a distance ``l`` ahead of its
wheel axle turns it into a velocity-controlled point: the look-ahead map is a
diffeomorphism between the two input spaces for every ``l > 0``.  This module
provides that map, the input transformation and its closed-form inverse, the
conversions between body velocities and wheel speeds, and the closed-form
precision/maneuverability trade-off used to select ``l`` once for an entire
run.

All types are immutable values and all operations are pure functions, so
everything here is safe for unrestricted concurrent use.  Angles are plain
radians and are never normalized; every formula is trig-periodic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Pose",
    "SiPoint",
    "SiVelocity",
    "UnicycleInput",
    "WheelSpeeds",
    "RobotGeometry",
    "NidParam",
    "nid_forward",
    "rl_matrix",
    "rl_matrix_inverse",
    "si_to_unicycle",
    "unicycle_to_wheels",
    "wheels_to_unicycle",
    "unicycle_derivative",
    "wheel_diff_bound",
    "forward_sum_bound",
    "static_cost",
    "static_optimal_l",
]


def _check_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class Pose:
    """Planar unicycle state: position (x1, x2) in meters, heading theta in radians."""

    x1: float
    x2: float
    theta: float

    def __post_init__(self):
        for name in ("x1", "x2", "theta"):
            _check_finite(name, getattr(self, name))


@dataclass(frozen=True)
class SiPoint:
    """Position of the velocity-controlled point, meters."""

    p1: float
    p2: float

    def __post_init__(self):
        _check_finite("p1", self.p1)
        _check_finite("p2", self.p2)


@dataclass(frozen=True)
class SiVelocity:
    """Commanded velocity of the point, m/s."""

    v1: float
    v2: float

    def __post_init__(self):
        _check_finite("v1", self.v1)
        _check_finite("v2", self.v2)

    def norm(self) -> float:
        return math.hypot(self.v1, self.v2)


@dataclass(frozen=True)
class UnicycleInput:
    """Unicycle input: linear velocity v (m/s) and angular velocity omega (rad/s)."""

    v: float
    omega: float

    def __post_init__(self):
        _check_finite("v", self.v)
        _check_finite("omega", self.omega)


@dataclass(frozen=True)
class WheelSpeeds:
    """Right and left wheel angular velocities, rad/s."""

    omega_r: float
    omega_l: float

    def __post_init__(self):
        _check_finite("omega_r", self.omega_r)
        _check_finite("omega_l", self.omega_l)


@dataclass(frozen=True)
class RobotGeometry:
    """Differential-drive geometry: wheel radius r_w, base length l_w, speed bound v_bar.

    All in SI units; each must be strictly positive.
    """

    r_w: float
    l_w: float
    v_bar: float

    def __post_init__(self):
        for name in ("r_w", "l_w", "v_bar"):
            value = _check_finite(name, getattr(self, name))
            if value <= 0.0:
                raise ValueError(f"{name} must be > 0, got {value}")


@dataclass(frozen=True)
class NidParam:
    """Look-ahead distance l in meters, valid on (0, inf)."""

    l: float

    def __post_init__(self):
        value = _check_finite("l", self.l)
        if value <= 0.0:
            raise ValueError(f"l must be > 0, got {value}")


def _l_value(l: float | NidParam) -> float:
    """Accept either a bare distance or a NidParam; reject l <= 0."""
    value = l.l if isinstance(l, NidParam) else float(l)
    if not math.isfinite(value) or value <= 0.0:
        raise ValueError(f"look-ahead distance must be finite and > 0, got {value!r}")
    return value


def nid_forward(pose: Pose, l: float | NidParam) -> SiPoint:
    """Map a pose to the point a distance l ahead of it along the heading."""
    lv = _l_value(l)
    return SiPoint(pose.x1 + lv * math.cos(pose.theta), pose.x2 + lv * math.sin(pose.theta))


def rl_matrix(theta: float, l: float | NidParam) -> np.ndarray:
    """2x2 matrix sending (v, omega) to the look-ahead point velocity; det = l."""
    lv = _l_value(l)
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -lv * s], [s, lv * c]])


def rl_matrix_inverse(theta: float, l: float | NidParam) -> np.ndarray:
    """Closed-form inverse of :func:`rl_matrix`: [[cos, sin], [-sin/l, cos/l]]."""
    lv = _l_value(l)
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [-s / lv, c / lv]])


def si_to_unicycle(u_si: SiVelocity, theta: float, l: float | NidParam) -> UnicycleInput:
    """Unicycle input that makes the look-ahead point move with velocity u_si.

    Singular as l -> 0: the angular rate scales with 1/l.
    """
    lv = _l_value(l)
    c, s = math.cos(theta), math.sin(theta)
    return UnicycleInput(c * u_si.v1 + s * u_si.v2, (-s * u_si.v1 + c * u_si.v2) / lv)


def unicycle_to_wheels(u: UnicycleInput, geom: RobotGeometry) -> WheelSpeeds:
    """Wheel speeds realizing (v, omega): half-sum carries v, difference carries omega."""
    total = 2.0 * u.v / geom.r_w
    diff = geom.l_w * u.omega / geom.r_w
    return WheelSpeeds(0.5 * (total + diff), 0.5 * (total - diff))


def wheels_to_unicycle(w: WheelSpeeds, geom: RobotGeometry) -> UnicycleInput:
    """Body velocities produced by the given wheel speeds; inverse of unicycle_to_wheels."""
    return UnicycleInput(
        0.5 * geom.r_w * (w.omega_r + w.omega_l),
        geom.r_w * (w.omega_r - w.omega_l) / geom.l_w,
    )


def unicycle_derivative(pose: Pose, u: UnicycleInput) -> np.ndarray:
    """Time derivative (dx1, dx2, dtheta) of the unicycle state under input u."""
    return np.array([u.v * math.cos(pose.theta), u.v * math.sin(pose.theta), u.omega])


def wheel_diff_bound(geom: RobotGeometry, l: float | NidParam) -> float:
    """Worst-case |omega_r - omega_l| over all point velocities with norm <= v_bar.

    Scales as 1/l: tight look-ahead distances demand sharp wheel-speed splits.
    """
    lv = _l_value(l)
    return geom.l_w * geom.v_bar / (geom.r_w * lv)


def forward_sum_bound(geom: RobotGeometry) -> float:
    """Worst-case |omega_r + omega_l| under the same speed bound; independent of l."""
    return 2.0 * geom.v_bar / geom.r_w


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return alpha


def static_cost(l: float | NidParam, alpha: float, geom: RobotGeometry) -> float:
    """Convex blend of precision (the distance l itself) and the wheel-difference bound.

    ``alpha * l + (1 - alpha) * l_w * v_bar / (r_w * l)`` for ``alpha`` in (0, 1).
    """
    alpha = _check_alpha(alpha)
    lv = _l_value(l)
    return alpha * lv + (1.0 - alpha) * geom.l_w * geom.v_bar / (geom.r_w * lv)


def static_optimal_l(alpha: float, geom: RobotGeometry) -> NidParam:
    """One-time look-ahead distance minimizing :func:`static_cost`."""
    alpha = _check_alpha(alpha)
    return NidParam(math.sqrt((1.0 - alpha) / alpha * geom.l_w * geom.v_bar / geom.r_w))
