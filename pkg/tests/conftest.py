# Import built-in modules
import os

# Import third-party modules
import pytest

# Import local modules
from porous_bingham.filesystem import get_forcings
from porous_bingham.geometry import Box
from porous_bingham.geometry import DoublePeriodicDomain
from porous_bingham.geometry import default_geometry
from porous_bingham.models import SolverConfig


@pytest.fixture()
def test_data_root():
    return os.path.join(os.path.dirname(__file__), "test_data")


@pytest.fixture()
def geometry():
    return default_geometry()


@pytest.fixture()
def domain(geometry):
    """Unit box, two epsilon cells per axis, 32x32 grid."""
    return DoublePeriodicDomain(Box((0.0, 0.0), (1.0, 1.0)), 0.5, geometry, 4)


@pytest.fixture()
def loose_solver():
    return SolverConfig(tol_aux=1e-5, tol_vi=1e-4)


@pytest.fixture(autouse=True)
def _fresh_forcings():
    get_forcings.cache_clear()
    yield
    get_forcings.cache_clear()
