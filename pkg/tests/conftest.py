import numpy as np
import pytest

from stewart_stack import _kernels_py
from stewart_stack.geometry import PlatformGeometry, check_constraints
from stewart_stack.kinematics import AssemblerState
from stewart_stack.solver import EndEffectorTarget, SolverOptions, solve_multiple, solve_optimal

try:
    from stewart_stack import _kernels as _compiled
except ImportError:
    _compiled = None

REFERENCE_TARGETS = [
    EndEffectorTarget(600.0, 1000.0, -1.57, 0.0),
    EndEffectorTarget(145.0, 1500.0, -0.207, 0.0),
    EndEffectorTarget(-319.0, 1532.0, 0.332, 0.0),
]

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def geom():
    return PlatformGeometry.symmetric()


@pytest.fixture(params=["python", "cython"])
def kernels(request):
    if request.param == "python":
        return _kernels_py
    if _compiled is None:
        pytest.skip("compiled kernels not built")
    return _compiled


def random_feasible_state(rng, geom, n=4, phi=0.0):
    """Rejection-sample per-platform poses that satisfy every leg limit."""
    rows = []
    while len(rows) < n:
        p = [rng.uniform(-150, 150), rng.uniform(250, 500), rng.uniform(-0.6, 0.6)]
        state = AssemblerState.from_array([p], phi)
        if check_constraints(geom, state.lifted()[0]).feasible:
            rows.append(p)
    return AssemblerState.from_array(rows, phi)


@pytest.fixture(scope="session")
def reference_solutions(geom):
    """Optimal pose plus two feasible poses for each reference target."""
    opts = SolverOptions()
    out = []
    for target in REFERENCE_TARGETS:
        feas = solve_multiple(target, 4, geom, opts, 2)
        opt = solve_optimal(target, 4, geom, opts, [f.state for f in feas])
        out.append((target, opt, feas))
    return out


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
