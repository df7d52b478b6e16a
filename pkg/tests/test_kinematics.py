import math

import numpy as np
import pytest

from stewart_stack.geometry import SpatialPose, lift_2d_to_3d
from stewart_stack.kinematics import (
    AssemblerState,
    fn_variable,
    fn_variable_grad,
    forward_2d,
    forward_3d,
    frobenius_norm_sq,
    jacobian_2d,
    jacobian_fd_oracle,
)

from conftest import random_feasible_state


def state(rows, phi=0.0):
    return AssemblerState.from_array(rows, phi)


class TestForward2D:
    def test_single_platform_passes_through(self):
        assert forward_2d(state([[100, 200, 0.3]])) == (100, 200, 0.3)

    def test_quarter_turn(self):
        out = forward_2d(state([[0, 200, np.pi / 2], [0, 200, 0]]))
        np.testing.assert_allclose(out, (-200, 200, np.pi / 2), atol=1e-12)

    def test_pure_summation(self):
        assert forward_2d(state([[50, 300, 0]] * 3)) == (150, 900, 0)

    def test_theta_is_left_to_right_sum(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(6, 3))
        total = 0.0
        for t in x[:, 2]:
            total += t
        assert forward_2d(state(x)).theta == total

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            AssemblerState((), 0.0)


class TestForward3D:
    def test_stacked_identity(self):
        poses = [SpatialPose(np.eye(3), [0, 0, 300])] * 4
        out = forward_3d(poses)
        np.testing.assert_allclose(out.translation, [0, 0, 1200])
        np.testing.assert_allclose(out.rotation, np.eye(3))

    def test_lifted_quarter_turn(self):
        s = state([[0, 200, np.pi / 2], [0, 200, 0]])
        np.testing.assert_allclose(forward_3d(s.lifted()).translation, [-200, 0, 200], atol=1e-12)

    def test_single_pose_unchanged(self):
        pose = lift_2d_to_3d(10, 400, 0.2, 1.0)
        out = forward_3d([pose])
        np.testing.assert_array_equal(out.rotation, pose.rotation)
        np.testing.assert_array_equal(out.translation, pose.translation)

    @pytest.mark.parametrize("phi", [0.0, 0.7, 2.5, 5.9])
    def test_matches_lifted_planar_output(self, phi, geom):
        rng = np.random.default_rng(int(phi * 10))
        for _ in range(20):
            s = random_feasible_state(rng, geom, phi=phi)
            ee = forward_2d(s)
            lifted = lift_2d_to_3d(ee.rho, ee.z, ee.theta, phi)
            out = forward_3d(s.lifted())
            np.testing.assert_allclose(out.translation, lifted.translation, atol=1e-9)
            np.testing.assert_allclose(out.rotation, lifted.rotation, atol=1e-12)


class TestJacobian:
    def test_single_platform_identity(self):
        s = state([[40, 350, 0.2]])
        np.testing.assert_allclose(jacobian_2d(s), np.eye(3), atol=1e-15)
        np.testing.assert_allclose(jacobian_fd_oracle(s, 1e-6), np.eye(3), atol=1e-6)

    def test_two_platforms_flat(self):
        rho2, z2 = 37.0, 410.0
        jac = jacobian_2d(state([[5, 300, 0], [rho2, z2, 0]]))
        np.testing.assert_allclose(jac[:2, 2], [-z2, rho2])
        np.testing.assert_allclose(jac[:2, 5], [0, 0])

    def test_structure(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(5, 3)) * [80, 80, 0.4] + [0, 350, 0]
        jac = jacobian_2d(state(x))
        np.testing.assert_array_equal(jac[2], np.tile([0.0, 0.0, 1.0], 5))
        np.testing.assert_array_equal(jac[:2, -1], [0.0, 0.0])
        before = np.concatenate([[0.0], np.cumsum(x[:-1, 2])])
        for i, a in enumerate(before):
            rot = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
            np.testing.assert_allclose(jac[:2, 3 * i : 3 * i + 2], rot, atol=1e-14)

    def test_fd_oracle_deterministic(self):
        s = state([[10, 320, 0.1], [-20, 380, -0.3]])
        np.testing.assert_array_equal(jacobian_fd_oracle(s), jacobian_fd_oracle(s))

    def test_fd_oracle_rejects_bad_step(self):
        with pytest.raises(ValueError):
            jacobian_fd_oracle(state([[0, 300, 0]]), 0.0)


class TestFrobeniusNorm:
    def test_single_platform(self):
        assert frobenius_norm_sq(state([[12, 345, -0.4]])) == 3.0

    def test_two_platforms_flat(self):
        rho2, z2 = 37.0, 410.0
        assert frobenius_norm_sq(state([[5, 300, 0], [rho2, z2, 0]])) == pytest.approx(6 + rho2**2 + z2**2, rel=1e-14)

    def test_equals_trace_of_jacobian_product(self, geom):
        rng = np.random.default_rng(11)
        for _ in range(20):
            s = random_feasible_state(rng, geom)
            jac = jacobian_2d(s)
            assert frobenius_norm_sq(s) == pytest.approx(np.trace(jac.T @ jac), rel=1e-13)
            assert frobenius_norm_sq(s, weights=np.ones(12)) == pytest.approx(np.trace(jac.T @ jac), rel=1e-13)

    def test_weights_scale_columns(self):
        s = state([[5, 300, 0], [0, 400, 0]])
        w = np.zeros(6)
        w[2] = 2.0
        assert frobenius_norm_sq(s, weights=w) == pytest.approx(2 * (400.0**2 + 1.0))

    def test_gradient_matches_finite_differences(self, geom):
        rng = np.random.default_rng(5)
        for _ in range(10):
            x = random_feasible_state(rng, geom).as_array().ravel()
            fd = np.empty_like(x)
            for j in range(x.size):
                h = 1e-5 * max(1.0, abs(x[j]))
                xp, xm = x.copy(), x.copy()
                xp[j] += h
                xm[j] -= h
                fd[j] = (fn_variable(xp) - fn_variable(xm)) / (xp[j] - xm[j])
            grad = fn_variable_grad(x)
            # FN is ~1e6, so cancellation noise scales with the largest component
            np.testing.assert_allclose(grad, fd, rtol=1e-6, atol=1e-7 * np.max(np.abs(grad)))
