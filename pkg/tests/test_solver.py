import math

import numpy as np
import pytest

from stewart_stack.geometry import check_constraints, lift_2d_to_3d
from stewart_stack.kinematics import forward_2d
from stewart_stack.solver import (
    EndEffectorTarget,
    InfeasibleTarget,
    SolverOptions,
    initial_guess,
    solve_feasible,
    solve_multiple,
    solve_optimal,
    wrap_angle,
)

from conftest import REFERENCE_TARGETS


def brute_force_z_max(geom):
    """Highest feasible single-platform z over a (rho, theta) grid, refined by bisection."""

    def feasible(rho, z, theta):
        return check_constraints(geom, lift_2d_to_3d(rho, z, theta, 0.0)).feasible

    best = -np.inf
    for rho in np.linspace(-60, 60, 13):
        for theta in np.linspace(-0.2, 0.2, 9):
            ok = [z for z in np.linspace(0, geom.l_max + 100, 601) if feasible(rho, z, theta)]
            if not ok:
                continue
            lo, hi = max(ok), max(ok) + 1.0
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                lo, hi = (mid, hi) if feasible(rho, mid, theta) else (lo, mid)
            best = max(best, lo)
    return best


class TestInitialGuess:
    def test_symmetric_split(self, geom):
        s = initial_guess(EndEffectorTarget(0, 1200, 0), 4, geom, z_floor=300)
        np.testing.assert_allclose(s.as_array(), [[0, 300, 0]] * 4, atol=1e-12)

    def test_floor_overrides(self, geom):
        s = initial_guess(EndEffectorTarget(0, 800, 0), 4, geom, z_floor=300)
        np.testing.assert_allclose(s.as_array(), [[0, 300, 0]] * 4, atol=1e-12)

    def test_single_platform_identity(self, geom):
        s = initial_guess(EndEffectorTarget(100, 400, 0.2), 1, geom)
        np.testing.assert_allclose(s.as_array(), [[100, 400, 0.2]], atol=1e-12)

    def test_reproduces_target_when_unclamped(self, geom):
        target = EndEffectorTarget(600, 1600, -1.2)
        s = initial_guess(target, 4, geom)
        np.testing.assert_allclose(forward_2d(s), (600, 1600, -1.2), atol=1e-9)

    def test_default_floor_is_l_min(self, geom):
        s = initial_guess(EndEffectorTarget(0, 100, 0), 3, geom)
        assert np.all(s.as_array()[:, 1] == geom.l_min)


def assert_valid(result, target, geom, opts):
    assert result.converged
    out = forward_2d(result.state)
    assert math.hypot(out.rho - target.rho, out.z - target.z) < opts.equality_tol_position
    assert abs(wrap_angle(out.theta - target.theta)) < opts.equality_tol_angle
    for pose in result.state.lifted():
        assert check_constraints(geom, pose).min_margin(geom) >= -opts.constraint_tol


class TestSolveOptimal:
    @pytest.mark.parametrize("target", REFERENCE_TARGETS, ids=["t600", "t145", "t-319"])
    def test_reference_targets(self, target, geom):
        opts = SolverOptions()
        res = solve_optimal(target, 4, geom, opts)
        assert_valid(res, target, geom, opts)
        assert res.kkt_residual <= opts.objective_tol

    def test_beats_feasible(self, reference_solutions):
        for _, opt, feas in reference_solutions:
            for f in feas:
                assert opt.fn_value <= f.fn_value * (1 + 1e-6)

    def test_deterministic(self, geom):
        opts = SolverOptions(rng_seed=7)
        a = solve_optimal(REFERENCE_TARGETS[0], 4, geom, opts)
        b = solve_optimal(REFERENCE_TARGETS[0], 4, geom, opts)
        assert a.to_dict() == b.to_dict()

    def test_full_extension_target(self, geom):
        z_max = brute_force_z_max(geom)
        top, bottom = geom.leg_nodes()
        assert z_max == pytest.approx(math.sqrt(geom.l_max**2 - np.sum((top[0] - bottom[0]) ** 2)), abs=1e-6)
        opts = SolverOptions(max_restarts=3)
        target = EndEffectorTarget(0.0, 4 * z_max, 0.0)
        res = solve_optimal(target, 4, geom, opts)
        assert_valid(res, target, geom, opts)
        for rep in res.constraint_margins:
            np.testing.assert_allclose(rep.leg_lengths_sq, geom.l_max**2, rtol=1e-6)
        with pytest.raises(InfeasibleTarget):
            solve_optimal(EndEffectorTarget(0.0, 4 * z_max + 1.0, 0.0), 4, geom, opts)

    def test_far_target_infeasible(self, geom):
        with pytest.raises(InfeasibleTarget):
            solve_optimal(EndEffectorTarget(0, 10 * 4 * geom.l_max, 0), 4, geom, SolverOptions())

    def test_scale_covariance(self, geom):
        opts = SolverOptions(optimal_starts=1)
        a = solve_optimal(REFERENCE_TARGETS[0], 4, geom, opts)
        t = REFERENCE_TARGETS[0]
        big = EndEffectorTarget(2 * t.rho, 2 * t.z, t.theta, t.phi)
        b = solve_optimal(big, 4, geom.scaled(2.0), SolverOptions(optimal_starts=1, restart_sigma_t=2 * opts.restart_sigma_t))
        diff = b.state.as_array() - a.state.as_array() * [2, 2, 1]
        assert np.max(np.abs(diff)) <= 10 * opts.equality_tol_position

    def test_non_zero_phi(self, geom):
        target = EndEffectorTarget(400, 1300, 0.4, 2.0)
        opts = SolverOptions()
        res = solve_optimal(target, 4, geom, opts)
        assert_valid(res, target, geom, opts)
        assert res.state.phi == 2.0


class TestSolveFeasible:
    def test_reference_target(self, geom, reference_solutions):
        opts = SolverOptions()
        target, opt, _ = reference_solutions[0]
        res = solve_feasible(target, 4, geom, opts)
        assert_valid(res, target, geom, opts)
        assert res.fn_value >= opt.fn_value

    def test_distinct_seeds_distinct_states(self, geom):
        opts = SolverOptions()
        a = solve_feasible(REFERENCE_TARGETS[0], 4, geom, SolverOptions(rng_seed=1))
        b = solve_feasible(REFERENCE_TARGETS[0], 4, geom, SolverOptions(rng_seed=2))
        assert np.linalg.norm(a.state.as_array() - b.state.as_array()) > opts.equality_tol_position
        np.testing.assert_allclose(forward_2d(a.state), forward_2d(b.state), atol=1e-3)

    def test_single_platform_unique(self, geom):
        target = EndEffectorTarget(20, 420, 0.1)
        res = solve_feasible(target, 1, geom, SolverOptions())
        np.testing.assert_allclose(res.state.as_array(), [[20, 420, 0.1]], atol=1e-6)


class TestSolveMultiple:
    def test_zero_sigma_equals_single_solve(self, geom):
        opts = SolverOptions(restart_sigma_t=0.0, restart_sigma_theta=0.0)
        (a,) = solve_multiple(REFERENCE_TARGETS[0], 4, geom, opts, 1)
        assert a.to_dict() == solve_feasible(REFERENCE_TARGETS[0], 4, geom, opts).to_dict()

    def test_repeatable(self, geom):
        opts = SolverOptions(rng_seed=3)
        a = solve_multiple(REFERENCE_TARGETS[0], 4, geom, opts, 2)
        b = solve_multiple(REFERENCE_TARGETS[0], 4, geom, opts, 2)
        assert [r.to_dict() for r in a] == [r.to_dict() for r in b]

    def test_three_distinct(self, geom):
        opts = SolverOptions()
        res = solve_multiple(REFERENCE_TARGETS[0], 4, geom, opts, 3)
        assert len(res) == 3
        for i in range(3):
            for j in range(i + 1, 3):
                gap = np.linalg.norm(res[i].state.as_array() - res[j].state.as_array())
                assert gap > opts.equality_tol_position

    def test_count_must_be_positive(self, geom):
        with pytest.raises(ValueError):
            solve_multiple(REFERENCE_TARGETS[0], 4, geom, SolverOptions(), 0)


class TestOptionsAndTargets:
    def test_bad_tolerance(self):
        with pytest.raises(ValueError):
            SolverOptions(objective_tol=0)

    def test_bad_iterations(self):
        with pytest.raises(ValueError):
            SolverOptions(max_iterations=0)

    def test_target_phi_range(self):
        with pytest.raises(ValueError):
            EndEffectorTarget(0, 1000, 0, 7.0)

    def test_wrap_angle(self):
        assert wrap_angle(2 * math.pi + 0.1) == pytest.approx(0.1)
        assert wrap_angle(-0.1) == pytest.approx(-0.1)
