import numpy as np
import pytest
import xarray as xr

import xsigma  # noqa: F401
from xsigma.criticality import decay_rate_table
from xsigma.integrator import DuhamelIntegrator, IntegratorControls, initial_state


def _decay_dataset(rate=-0.5):
    t = np.linspace(0.0, 100.0, 201)
    return xr.Dataset(
        {"l2_v": ("time", (1.0 + t) ** rate), "field": (("time", "x"), np.zeros((t.size, 3)))},
        coords={"time": t},
    )


def test_accessor_grid_matches_integration(grid_1d, params_1d):
    state = initial_state(grid_1d, params_1d, 0.1)
    trajectory, _ = DuhamelIntegrator(grid_1d, params_1d, IntegratorControls()).integrate(state, 0.2)
    assert trajectory.sigma.grid == grid_1d


def test_fit_decay():
    fit = _decay_dataset().sigma.fit_decay("l2_v", (10.0, 100.0), -0.5)
    np.testing.assert_allclose(fit.slope, -0.5, atol=1e-12)
    assert fit.quantity == "l2_v"
    assert fit.passed


def test_fit_decay_unknown_variable():
    with pytest.raises(ValueError, match="Trajectory has no variable"):
        _decay_dataset().sigma.fit_decay("l2_u", (10.0, 100.0), -0.5)


def test_solution_norm_is_running_maximum(grid_2d, global_params):
    state = initial_state(grid_2d, global_params, 0.01)
    trajectory, _ = DuhamelIntegrator(grid_2d, global_params, IntegratorControls()).integrate(state, 1.0)
    running = trajectory.sigma.solution_norm(decay_rate_table(global_params))
    assert running.dims == ("time",)
    assert np.all(np.diff(running.values) >= 0)
    assert running.values[-1] > 0


def test_to_csv_keeps_time_series_only(tmp_path):
    path = _decay_dataset().sigma.to_csv(tmp_path / "series.csv")
    with open(path) as f:
        assert f.readline().strip() == "time,l2_v"
