import numpy as np
import pytest
import xarray as xr

from xsigma.grid import Grid
from xsigma.params import ModelParams


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False, help="run slow acceptance tests"
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long acceptance run, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="need --runslow option to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def grid_1d():
    return Grid(1, 64, 16.0)


@pytest.fixture
def grid_2d():
    return Grid(2, 32, 8.0)


@pytest.fixture
def params_1d():
    """sigma = 1.5 in one dimension (n <= sigma, blow-up side)."""
    return ModelParams(sigma=1.5, dim=1, p=2.0, q=2.0)


@pytest.fixture
def params_2d():
    return ModelParams(sigma=1.5, dim=2, p=2.0, q=2.0)


@pytest.fixture
def global_params():
    """A point in the global-existence region."""
    return ModelParams(sigma=1.5, dim=2, p=5.0, q=8.0)


def make_trajectory(grid, times, amplitude=1.0, decay=0.5):
    """
    Synthetic trajectory with nonnegative snapshots
    u = v = amplitude exp(-|x|^2) (1 + t)^(-decay).
    """
    times = np.asarray(times, dtype=float)
    profile = amplitude * np.exp(-grid.radius**2)
    factor = (1.0 + times) ** (-decay)
    snaps = factor.reshape((-1,) + (1,) * grid.dim) * profile
    dims = ("time",) + grid.dims
    ds = xr.Dataset(
        {
            "u": (dims, snaps),
            "v": (dims, snaps.copy()),
            "u1": (grid.dims, profile),
            "v1": (grid.dims, profile.copy()),
            "l2_v": ("time", factor),
        },
        coords=grid.coords().coords,
    )
    ds = ds.assign_coords(time=("time", times, {"axis": "T"}))
    ds.attrs.update(grid.to_attrs())
    return ds


@pytest.fixture
def synthetic_trajectory():
    return make_trajectory
