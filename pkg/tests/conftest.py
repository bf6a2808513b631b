import numpy as np
import pytest

from flatcert.grid import boundary_trace, make_grid
from flatcert.ledger import HarnackParams, derive_ledger
from flatcert.mse import preset_boundary, solve_mse
from flatcert.pipeline import improvement_step, samples_from_graph

# the three flatness levels every heavy check runs at
EPS_RUNS = (10**-1.5, 1e-2, 10**-2.5)
SADDLE_Q = 0.12


@pytest.fixture(scope="session")
def std_params():
    return HarnackParams(3, 0.25, 0.2)


@pytest.fixture(scope="session")
def std_ledger(std_params):
    return derive_ledger(std_params)


@pytest.fixture(scope="session")
def unit_grid_129():
    return make_grid(2, 1.0, 129)


@pytest.fixture(scope="session")
def pipeline_runs(std_ledger, unit_grid_129):
    """Solved saddle graphs and their full improvement runs at the three levels."""
    runs = {}
    for eps in EPS_RUNS:
        data = preset_boundary(unit_grid_129, "saddle", eps, q=SADDLE_Q)
        sol = solve_mse(boundary_trace(data))
        samples = samples_from_graph(sol.u)
        runs[eps] = (sol, improvement_step(samples, eps, std_ledger))
    return runs
