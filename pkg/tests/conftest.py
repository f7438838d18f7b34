import math

import pytest

from exterior_blowup.model import InitialData, ModelParams
from exterior_blowup.solver import RadialGrid, SolverOptions, detect_blowup, evolve


@pytest.fixture(scope="session")
def bump():
    return InitialData.bump(r_lo=1.2, r_hi=2.2, amplitude=1.0)


@pytest.fixture(scope="session")
def heat_params():
    return ModelParams(tau=0, zeta=0.0, lam=1.0, p=1.5, epsilon=1.0)


@pytest.fixture(scope="session")
def heat_run(heat_params, bump):
    """Reference blow-up run (p = 1.5, eps = 1) with snapshots."""
    traj = evolve(heat_params, bump, RadialGrid.from_spacing(30.0, 0.05), SolverOptions())
    return traj, detect_blowup(traj)


@pytest.fixture
def report_line(capsys):
    """Print straight to the terminal, bypassing capture."""
    def emit(text):
        with capsys.disabled():
            print(text)
    return emit


def close(a, b, rel=1e-9):
    return math.isclose(a, b, rel_tol=rel)
