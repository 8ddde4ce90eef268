import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from polaron_lab.spectral_core import Grid
from polaron_lab.pekar import minimize_pekar


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def grid16():
    return Grid(3, 16, 16.0)


@pytest.fixture(scope="session")
def pekar_small():
    """Moderate-resolution g=1 minimizer shared across test modules."""
    return minimize_pekar(Grid(3, 32, 16.0), g=1.0, tol=1e-7, compute_gap=False)


@pytest.fixture(scope="session")
def pekar_rescaled_small():
    """g = 1/2 (rescaled-unit) localized minimizer used by the dynamics tests.

    The box must be at least ~30 at this coupling or the uniform torus state
    undercuts the polaron branch.
    """
    sol = minimize_pekar(Grid(3, 32, 32.0), g=0.5, tol=1e-9, compute_gap=False)
    assert "delocalized" not in sol.flags
    return sol
