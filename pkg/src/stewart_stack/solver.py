"""Inverse kinematics of a planar stack under per-platform leg limits.

Two flavours share one constrained-NLP formulation:

* optimal: minimize the variable part of ``trace(J^T J)``;
* feasible: zero objective, the first constraint-satisfying pose wins.

The NLP is solved with SLSQP on variables scaled by ``l_max`` so that the
problem is invariant to a uniform change of length unit.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy.optimize import minimize, nnls

from . import _backend
from .geometry import check_constraints
from .kinematics import (
    AssemblerState,
    fn_constant,
    fn_variable,
    fn_variable_grad,
    forward_2d,
    jacobian_2d,
)

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class EndEffectorTarget:
    rho: float
    z: float
    theta: float
    phi: float = 0.0

    def __post_init__(self):
        vals = (self.rho, self.z, self.theta, self.phi)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("target coordinates must be finite")
        if not 0.0 <= self.phi < TWO_PI:
            raise ValueError("target phi must lie in [0, 2*pi)")


@dataclass(frozen=True)
class SolverOptions:
    equality_tol_position: float = 1e-3
    equality_tol_angle: float = 1e-6
    constraint_tol: float = 1e-6
    objective_tol: float = 1e-6
    max_iterations: int = 500
    restart_sigma_t: float = 50.0
    restart_sigma_theta: float = 0.2
    max_restarts: int = 20
    rng_seed: int = 0
    optimal_starts: int = 4
    z_floor: float | None = None

    def __post_init__(self):
        for name in ("equality_tol_position", "equality_tol_angle", "constraint_tol", "objective_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.restart_sigma_t < 0 or self.restart_sigma_theta < 0:
            raise ValueError("restart sigmas must be non-negative")
        if self.max_restarts < 1 or self.optimal_starts < 1:
            raise ValueError("max_restarts and optimal_starts must be at least 1")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class SolveResult:
    state: AssemblerState
    fn_value: float
    ee_error: tuple
    constraint_margins: tuple
    converged: bool
    iterations: int
    restarts_used: int
    kkt_residual: float
    mode: str

    @property
    def fn_norm(self):
        return math.sqrt(self.fn_value)

    def to_dict(self):
        return {
            "mode": self.mode,
            "converged": self.converged,
            "state": self.state.to_dict(),
            "fn_value": self.fn_value,
            "ee_error": list(self.ee_error),
            "kkt_residual": self.kkt_residual,
            "iterations": self.iterations,
            "restarts_used": self.restarts_used,
            "constraint_margins": [r.to_dict() for r in self.constraint_margins],
        }


class SolveError(RuntimeError):
    """Base for solver failures; ``result`` holds the best attempt, if any."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class NoConvergence(SolveError):
    pass


class InfeasibleTarget(SolveError):
    pass


def wrap_angle(a):
    """Map an angle difference into ``[-pi, pi)``."""
    return (a + math.pi) % TWO_PI - math.pi


def reach_bound(n, geom):
    """Upper bound on the end-effector distance from the base origin."""
    r_top = float(np.max(np.linalg.norm(geom.top_nodes, axis=1)))
    r_bot = float(np.max(np.linalg.norm(geom.bottom_nodes, axis=1)))
    return n * (geom.l_max + r_top + r_bot)


def initial_guess(target, n, geom, z_floor=None):
    """Even split of the target over ``n`` platforms.

    Every platform gets ``theta / n`` and the same local translation ``p``,
    chosen so the stack reaches the target position under those angles.
    Local heights are then raised to at least ``z_floor`` (default ``l_min``).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if z_floor is None:
        z_floor = geom.l_min
    step = target.theta / n
    m = np.zeros((2, 2))
    for k in range(n):
        c, s = math.cos(k * step), math.sin(k * step)
        m += np.array([[c, -s], [s, c]])
    p = np.linalg.lstsq(m, np.array([target.rho, target.z]), rcond=None)[0]
    p[1] = max(p[1], z_floor)
    x = np.tile([p[0], p[1], step], (n, 1))
    return AssemblerState.from_array(x, target.phi)


class _Problem:
    """Scaled NLP for one (target, n, geometry)."""

    def __init__(self, target, n, geom, optimize):
        self.target = target
        self.n = n
        self.geom = geom
        self.optimize = optimize
        self.length = geom.l_max
        self.scale = np.tile([self.length, self.length, 1.0], n)
        self.top, self.bottom = geom.leg_nodes()
        self.sin_tmin = math.sin(geom.theta_min)
        self.goal = np.array([target.rho, target.z, target.theta])
        self.row_scale = np.array([self.length, self.length, 1.0])
        cscale = np.array([self.length**2, self.length**2, self.length, self.length])
        self.cscale = np.tile(cscale, (n, 6, 1))

    def to_x(self, u):
        return np.asarray(u) * self.scale

    def objective(self, u):
        if not self.optimize:
            return 0.0, np.zeros_like(u)
        x = self.to_x(u)
        f = fn_variable(x) / self.length**2
        g = fn_variable_grad(x) * self.scale / self.length**2
        return f, g

    def eq(self, u):
        state = AssemblerState.from_array(self.to_x(u), self.target.phi)
        return (np.array(forward_2d(state)) - self.goal) / self.row_scale

    def eq_jac(self, u):
        state = AssemblerState.from_array(self.to_x(u), self.target.phi)
        return jacobian_2d(state) * self.scale / self.row_scale[:, None]

    def _legs(self, u):
        x = self.to_x(u).reshape(self.n, 3)
        return _backend.leg_constraints(
            x, self.target.phi, self.top, self.bottom, self.geom.l_min, self.geom.l_max, self.sin_tmin
        )

    def ineq(self, u):
        values, _ = self._legs(u)
        return (values / self.cscale).ravel()

    def ineq_jac(self, u):
        _, grads = self._legs(u)
        grads = grads / self.cscale[..., None] * self.scale.reshape(self.n, 3)[:, None, None, :]
        jac = np.zeros((self.n * 24, 3 * self.n))
        for i in range(self.n):
            jac[24 * i : 24 * (i + 1), 3 * i : 3 * i + 3] = grads[i].reshape(24, 3)
        return jac

    def newton_polish(self, u, tol, iters=5):
        """Min-norm Newton steps onto the end-effector equality manifold."""
        for _ in range(iters):
            h = self.eq(u)
            if np.max(np.abs(h)) <= tol:
                break
            u = u - np.linalg.lstsq(self.eq_jac(u), h, rcond=None)[0]
        return u

    def kkt_residual(self, u, active_tol=1e-7):
        """Relative first-order stationarity residual at ``u``.

        Multipliers are fitted independently of the NLP solver by
        non-negative least squares over the equalities and the active
        inequalities.
        """
        _, g = self.objective(u)
        a_eq = self.eq_jac(u)
        c = self.ineq(u)
        a_in = self.ineq_jac(u)[c <= active_tol]
        basis = np.vstack([a_eq, -a_eq, a_in]).T
        _, resid = nnls(basis, g, maxiter=50 * basis.shape[1])
        return float(resid / max(1.0, np.linalg.norm(g)))


def _evaluate(problem, u, opts, iterations, restarts_used, mode):
    x = problem.to_x(u)
    state = AssemblerState.from_array(x, problem.target.phi)
    out = forward_2d(state)
    pos_err = math.hypot(out.rho - problem.target.rho, out.z - problem.target.z)
    ang_err = abs(wrap_angle(out.theta - problem.target.theta))
    reports = tuple(check_constraints(problem.geom, pose) for pose in state.lifted())
    min_margin = min(r.min_margin(problem.geom) for r in reports)
    kkt = problem.kkt_residual(u) if problem.optimize else 0.0
    feasible = (
        pos_err <= opts.equality_tol_position
        and ang_err <= opts.equality_tol_angle
        and min_margin >= -opts.constraint_tol
    )
    converged = feasible and kkt <= opts.objective_tol
    result = SolveResult(
        state=state,
        fn_value=fn_constant(state.n) + fn_variable(x),
        ee_error=(pos_err, ang_err),
        constraint_margins=reports,
        converged=converged,
        iterations=iterations,
        restarts_used=restarts_used,
        kkt_residual=kkt,
        mode=mode,
    )
    return result, feasible


def _run(problem, x0, opts, restarts_used):
    u0 = x0.as_array().ravel() / problem.scale
    res = minimize(
        problem.objective,
        u0,
        jac=True,
        method="SLSQP",
        constraints=[
            {"type": "eq", "fun": problem.eq, "jac": problem.eq_jac},
            {"type": "ineq", "fun": problem.ineq, "jac": problem.ineq_jac},
        ],
        options={"maxiter": opts.max_iterations, "ftol": 1e-14},
    )
    tol = 0.01 * min(opts.equality_tol_position / problem.length, opts.equality_tol_angle)
    u = problem.newton_polish(res.x, tol)
    mode = "optimal" if problem.optimize else "feasible"
    return _evaluate(problem, u, opts, int(res.nit), restarts_used, mode)


def _attempt_rng(opts, attempt):
    return np.random.default_rng(np.random.SeedSequence([opts.rng_seed, attempt]))


def _perturbed_guess(guess, opts, attempt):
    rng = _attempt_rng(opts, attempt)
    x = guess.as_array()
    noise = rng.standard_normal(x.shape)
    noise[:, :2] *= opts.restart_sigma_t
    noise[:, 2] *= opts.restart_sigma_theta
    return AssemblerState.from_array(x + noise, guess.phi)


def _check_reach(target, n, geom):
    if n < 1:
        raise ValueError("n must be at least 1")
    if math.hypot(target.rho, target.z) > reach_bound(n, geom):
        raise InfeasibleTarget(f"target ({target.rho}, {target.z}) lies beyond the reach of a {n}-stack")


def _better(a, b):
    return b is None or (a.converged, -a.fn_value) > (b.converged, -b.fn_value)


def _raise_failure(best, any_feasible, attempts):
    if any_feasible:
        raise NoConvergence(f"no converged solution after {attempts} attempts", best)
    raise InfeasibleTarget(f"no feasible pose found in {attempts} attempts", best)


def solve_multiple(target, n, geom, opts, count, optimize=False):
    """Return ``count`` converged solves from Gaussian-perturbed initial guesses.

    Attempt ``a`` perturbs the even-split guess with a generator seeded by
    ``(rng_seed, a)``; attempts continue until ``count`` successes or
    ``max_restarts`` attempts.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    _check_reach(target, n, geom)
    problem = _Problem(target, n, geom, optimize)
    guess = initial_guess(target, n, geom, opts.z_floor)
    found = []
    best = None
    any_feasible = False
    for attempt in range(opts.max_restarts):
        result, feasible = _run(problem, _perturbed_guess(guess, opts, attempt), opts, attempt)
        any_feasible |= feasible
        if result.converged:
            found.append(result)
            if len(found) == count:
                return found
        elif _better(result, best):
            best = result
    if found:
        raise NoConvergence(f"only {len(found)} of {count} solves converged", found[0])
    _raise_failure(best, any_feasible, opts.max_restarts)


def solve_feasible(target, n, geom, opts):
    """First constraint-satisfying pose from the seeded perturbed restarts."""
    return solve_multiple(target, n, geom, opts, 1, optimize=False)[0]


def solve_optimal(target, n, geom, opts, warm_starts=()):
    """Minimize the Frobenius norm of the stack Jacobian at the target.

    Runs the unperturbed even-split guess, up to ``optimal_starts - 1``
    perturbed restarts and any ``warm_starts`` states, then keeps the
    converged local minimum with the lowest ``fn_value``.
    """
    _check_reach(target, n, geom)
    problem = _Problem(target, n, geom, True)
    guess = initial_guess(target, n, geom, opts.z_floor)
    best = None
    any_feasible = False
    successes = 0
    attempts = 0
    starts = [guess] + [AssemblerState(s.platforms, target.phi) for s in warm_starts]
    for attempt, x0 in enumerate(starts):
        result, feasible = _run(problem, x0, opts, attempt)
        attempts += 1
        any_feasible |= feasible
        successes += result.converged
        if _better(result, best):
            best = result
    attempt = 1
    while successes < opts.optimal_starts and attempt < opts.max_restarts:
        result, feasible = _run(problem, _perturbed_guess(guess, opts, attempt), opts, attempt)
        attempts += 1
        any_feasible |= feasible
        successes += result.converged
        if _better(result, best):
            best = result
        attempt += 1
    if best is not None and best.converged:
        return replace(best, restarts_used=attempts - 1)
    _raise_failure(best, any_feasible, attempts)
