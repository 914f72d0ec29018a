import math

import numpy as np
import pytest

from nid_pmpc.kinematics import (
    NidParam,
    Pose,
    RobotGeometry,
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

TESTBED = RobotGeometry(r_w=0.005, l_w=0.03, v_bar=0.1)


class TestNidForward:
    def test_heading_aligned_offset(self):
        p = nid_forward(Pose(0.0, 0.0, 0.0), 0.1)
        assert p.p1 == pytest.approx(0.1, abs=1e-15)
        assert p.p2 == pytest.approx(0.0, abs=1e-15)

    def test_quarter_turn(self):
        p = nid_forward(Pose(1.0, 2.0, math.pi / 2), 0.5)
        assert p.p1 == pytest.approx(1.0, abs=1e-15)
        assert p.p2 == pytest.approx(2.5, abs=1e-15)

    def test_against_scalar_evaluation(self):
        pose, l = Pose(0.3, -0.2, math.pi / 4), 0.078
        p = nid_forward(pose, l)
        assert p.p1 == pytest.approx(0.3 + l * math.cos(math.pi / 4), rel=1e-15)
        assert p.p2 == pytest.approx(-0.2 + l * math.sin(math.pi / 4), rel=1e-15)

    def test_rejects_nonpositive_l(self):
        with pytest.raises(ValueError):
            nid_forward(Pose(0, 0, 0), 0.0)
        with pytest.raises(ValueError):
            nid_forward(Pose(0, 0, 0), -0.1)

    def test_accepts_nid_param(self):
        a = nid_forward(Pose(0.3, -0.2, 1.1), 0.078)
        b = nid_forward(Pose(0.3, -0.2, 1.1), NidParam(0.078))
        assert (a.p1, a.p2) == (b.p1, b.p2)


class TestRlMatrix:
    def test_identity_at_unit_l(self):
        assert np.array_equal(rl_matrix(0.0, 1.0), np.eye(2))

    def test_scaling_column(self):
        assert np.array_equal(rl_matrix(0.0, 0.1), np.array([[1.0, 0.0], [0.0, 0.1]]))

    def test_determinant_equals_l(self):
        m = rl_matrix(math.pi / 3, 0.078)
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        assert det == pytest.approx(0.078, rel=1e-14)

    def test_inverse_closed_form(self):
        theta, l = 0.7, 0.3
        prod = rl_matrix(theta, l) @ rl_matrix_inverse(theta, l)
        assert np.allclose(prod, np.eye(2), atol=1e-14)

    def test_rejects_nonpositive_l(self):
        with pytest.raises(ValueError):
            rl_matrix(0.3, 0.0)
        with pytest.raises(ValueError):
            rl_matrix_inverse(0.3, -1.0)


class TestSiToUnicycle:
    def test_forward_component(self):
        u = si_to_unicycle(SiVelocity(1.0, 0.0), 0.0, 0.1)
        assert (u.v, u.omega) == (1.0, 0.0)

    def test_lateral_component_scales_inverse_l(self):
        u = si_to_unicycle(SiVelocity(0.0, 1.0), 0.0, 0.1)
        assert u.v == 0.0
        assert u.omega == pytest.approx(10.0, rel=1e-15)

    def test_round_trip_through_rl_matrix(self):
        u_si = SiVelocity(0.05, 0.05)
        u = si_to_unicycle(u_si, math.pi / 6, 0.078)
        recovered = rl_matrix(math.pi / 6, 0.078) @ np.array([u.v, u.omega])
        assert recovered[0] == pytest.approx(0.05, rel=1e-12)
        assert recovered[1] == pytest.approx(0.05, rel=1e-12)

    def test_rejects_nonpositive_l(self):
        with pytest.raises(ValueError):
            si_to_unicycle(SiVelocity(1.0, 0.0), 0.0, 0.0)


class TestWheelMaps:
    def test_zero_maps_to_zero(self):
        w = unicycle_to_wheels(UnicycleInput(0.0, 0.0), TESTBED)
        assert (w.omega_r, w.omega_l) == (0.0, 0.0)
        u = wheels_to_unicycle(WheelSpeeds(0.0, 0.0), TESTBED)
        assert (u.v, u.omega) == (0.0, 0.0)

    def test_hand_solved_two_by_two(self):
        # omega_r + omega_l = 2v/r_w = 20, omega_r - omega_l = l_w*omega/r_w = 6
        w = unicycle_to_wheels(UnicycleInput(0.05, 1.0), TESTBED)
        assert w.omega_r == pytest.approx(13.0, rel=1e-14)
        assert w.omega_l == pytest.approx(7.0, rel=1e-14)

    def test_inverse_of_hand_solved(self):
        u = wheels_to_unicycle(WheelSpeeds(13.0, 7.0), TESTBED)
        assert u.v == pytest.approx(0.05, rel=1e-14)
        assert u.omega == pytest.approx(1.0, rel=1e-14)

    def test_equal_wheels_drive_straight(self):
        for a in (0.3, -2.0, 11.0):
            assert wheels_to_unicycle(WheelSpeeds(a, a), TESTBED).omega == 0.0

    def test_round_trip_is_identity(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            u = UnicycleInput(rng.uniform(-1, 1), rng.uniform(-20, 20))
            back = wheels_to_unicycle(unicycle_to_wheels(u, TESTBED), TESTBED)
            assert back.v == pytest.approx(u.v, abs=1e-12)
            assert back.omega == pytest.approx(u.omega, abs=1e-12)


class TestUnicycleDerivative:
    def test_axis_aligned(self):
        d = unicycle_derivative(Pose(0, 0, 0.0), UnicycleInput(1.0, 0.0))
        assert np.allclose(d, [1.0, 0.0, 0.0], atol=1e-15)

    def test_quarter_heading(self):
        d = unicycle_derivative(Pose(0, 0, math.pi / 2), UnicycleInput(1.0, 0.0))
        assert np.allclose(d, [0.0, 1.0, 0.0], atol=1e-15)

    def test_scalar_trig_evaluation(self):
        d = unicycle_derivative(Pose(0, 0, math.pi / 4), UnicycleInput(math.sqrt(2), 2.0))
        assert np.allclose(d, [1.0, 1.0, 2.0], rtol=1e-14)


class TestBounds:
    def test_wheel_diff_bound_value(self):
        bound = wheel_diff_bound(TESTBED, 0.078)
        assert bound == pytest.approx(0.03 * 0.1 / (0.005 * 0.078), rel=1e-14)

    def test_doubling_l_halves_bound(self):
        assert wheel_diff_bound(TESTBED, 0.2) == pytest.approx(
            0.5 * wheel_diff_bound(TESTBED, 0.1), rel=1e-14
        )

    def test_cancellation_case(self):
        geom = RobotGeometry(r_w=0.01, l_w=0.01, v_bar=0.5)
        assert wheel_diff_bound(geom, 0.5) == pytest.approx(1.0, rel=1e-14)

    def test_wheel_diff_bound_rejects_nonpositive_l(self):
        with pytest.raises(ValueError):
            wheel_diff_bound(TESTBED, 0.0)

    def test_forward_sum_bound_value(self):
        assert forward_sum_bound(TESTBED) == pytest.approx(40.0, rel=1e-15)

    def test_forward_sum_bound_unit_case(self):
        assert forward_sum_bound(RobotGeometry(0.01, 0.03, 0.005)) == pytest.approx(1.0)


class TestStaticCost:
    def test_symmetric_blend(self):
        l = 0.23
        expected = 0.5 * (l + 0.03 * 0.1 / (0.005 * l))
        assert static_cost(l, 0.5, TESTBED) == pytest.approx(expected, rel=1e-14)

    def test_reference_geometry_value(self):
        expected = 0.99 * 0.078 + 0.01 * 0.6 / 0.078
        assert static_cost(0.078, 0.99, TESTBED) == pytest.approx(expected, rel=1e-14)

    def test_grid_argmin_property(self):
        l_star = static_optimal_l(0.99, TESTBED).l
        best = static_cost(l_star, 0.99, TESTBED)
        for l in np.linspace(1e-3, 1.0, 1000):
            assert static_cost(l, 0.99, TESTBED) >= best - 1e-15

    def test_rejects_bad_alpha(self):
        for alpha in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(ValueError):
                static_cost(0.1, alpha, TESTBED)
            with pytest.raises(ValueError):
                static_optimal_l(alpha, TESTBED)


class TestStaticOptimalL:
    def test_reported_value(self):
        assert static_optimal_l(0.99, TESTBED).l == pytest.approx(0.078, abs=5e-4)

    def test_balanced_case(self):
        geom = RobotGeometry(r_w=0.1, l_w=0.1, v_bar=1.0)
        assert static_optimal_l(0.5, geom).l == pytest.approx(1.0, rel=1e-14)

    def test_stationarity_by_central_difference(self):
        l_star = static_optimal_l(0.99, TESTBED).l
        h = 1e-6
        deriv = (
            static_cost(l_star + h, 0.99, TESTBED)
            - static_cost(l_star - h, 0.99, TESTBED)
        ) / (2 * h)
        assert abs(deriv) < 1e-9


class TestTypeInvariants:
    def test_pose_rejects_nonfinite(self):
        for bad in (math.inf, -math.inf, math.nan):
            with pytest.raises(ValueError):
                Pose(bad, 0.0, 0.0)

    def test_geometry_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            RobotGeometry(0.0, 0.03, 0.1)
        with pytest.raises(ValueError):
            RobotGeometry(0.005, -1.0, 0.1)
        with pytest.raises(ValueError):
            RobotGeometry(0.005, 0.03, 0.0)

    def test_nid_param_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            NidParam(0.0)
        with pytest.raises(ValueError):
            NidParam(-0.01)


class TestRandomizedInvariants:
    def test_distance_identity(self):
        rng = np.random.default_rng(42)
        for _ in range(1000):
            pose = Pose(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-10, 10))
            l = rng.uniform(1e-3, 1.0)
            p = nid_forward(pose, l)
            dist = math.hypot(p.p1 - pose.x1, p.p2 - pose.x2)
            assert abs(dist - l) <= 1e-12 * l

    def test_diffeomorphism_consistency(self):
        rng = np.random.default_rng(43)
        for _ in range(1000):
            theta = rng.uniform(-10, 10)
            l = rng.uniform(1e-3, 1.0)
            u_si = SiVelocity(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1))
            u = si_to_unicycle(u_si, theta, l)
            back = rl_matrix(theta, l) @ np.array([u.v, u.omega])
            assert abs(back[0] - u_si.v1) < 1e-10
            assert abs(back[1] - u_si.v2) < 1e-10

    def _bounded_samples(self, rng, n):
        for _ in range(n):
            theta = rng.uniform(-math.pi, math.pi)
            l = rng.uniform(1e-3, 1.0)
            angle = rng.uniform(-math.pi, math.pi)
            speed = rng.uniform(0.0, TESTBED.v_bar)
            yield theta, l, SiVelocity(speed * math.cos(angle), speed * math.sin(angle))

    def test_wheel_difference_bound(self):
        rng = np.random.default_rng(44)
        for theta, l, u_si in self._bounded_samples(rng, 1000):
            w = unicycle_to_wheels(si_to_unicycle(u_si, theta, l), TESTBED)
            assert abs(w.omega_r - w.omega_l) <= wheel_diff_bound(TESTBED, l) + 1e-12

    def test_forward_sum_bound_and_l_independence(self):
        rng = np.random.default_rng(45)
        samples = list(self._bounded_samples(rng, 1000))
        maxima = {}
        for l_fixed in (0.01, 1.0):
            worst = 0.0
            for theta, _, u_si in samples:
                w = unicycle_to_wheels(si_to_unicycle(u_si, theta, l_fixed), TESTBED)
                total = abs(w.omega_r + w.omega_l)
                assert total <= forward_sum_bound(TESTBED) + 1e-12
                worst = max(worst, total)
            maxima[l_fixed] = worst
        assert abs(maxima[0.01] - maxima[1.0]) < 1e-9

    def test_wheel_map_bijectivity(self):
        rng = np.random.default_rng(46)
        for _ in range(1000):
            u = UnicycleInput(rng.uniform(-0.2, 0.2), rng.uniform(-30, 30))
            back = wheels_to_unicycle(unicycle_to_wheels(u, TESTBED), TESTBED)
            assert abs(back.v - u.v) < 1e-12
            assert abs(back.omega - u.omega) < 1e-12
