import numpy as np
import pandas as pd
import pytest
import xarray as xr

from xsigma.core import SpectralField, gaussian_field, to_spectral
from xsigma.grid import Grid, grid_from_dataset
from xsigma.integrator import (
    TRAJECTORY_COLUMNS,
    DuhamelIntegrator,
    IntegratorControls,
    initial_state,
    trajectory_to_csv,
)


def _small_trajectory(grid, params, store_fields=True):
    controls = IntegratorControls(store_fields=store_fields)
    state = initial_state(grid, params, 0.1)
    trajectory, _ = DuhamelIntegrator(grid, params, controls).integrate(state, 0.5, [0.25, 0.5])
    return trajectory


def test_binary_round_trip(tmp_path):
    grid = Grid(2, 16, 3.0)
    rng = np.random.default_rng(11)
    field = to_spectral(rng.standard_normal(grid.shape), grid)
    path = field.to_binary(tmp_path / "field.bin")

    loaded = SpectralField.from_binary(path)
    assert loaded.grid == grid
    np.testing.assert_array_equal(loaded.coefficients, field.coefficients)
    # 24-byte header followed by interleaved real/imag doubles.
    assert (tmp_path / "field.bin").stat().st_size == 24 + 16 * grid.size


def test_binary_payload_is_ascending_wavenumber_order(tmp_path):
    grid = Grid(1, 8, 1.0)
    coeffs = np.zeros(grid.shape, dtype=complex)
    coeffs[1] = 2.0 + 3.0j
    path = SpectralField(grid, coeffs).to_binary(tmp_path / "mode.bin")
    payload = np.fromfile(path, dtype="<f8", offset=24)
    # k = -4 .. 3, so k = 1 sits at position 5.
    np.testing.assert_array_equal(payload[10:12], [2.0, 3.0])
    assert np.count_nonzero(payload) == 2


def test_binary_rejects_truncated_payload(tmp_path):
    grid = Grid(1, 16, 2.0)
    path = tmp_path / "short.bin"
    gaussian_field(grid).to_binary(path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-16])
    with pytest.raises(ValueError, match="expected 16"):
        SpectralField.from_binary(path)


def test_field_csv_has_wavenumber_rows(tmp_path):
    grid = Grid(2, 8, 1.0)
    path = gaussian_field(grid).to_csv(tmp_path / "field.csv")
    df = pd.read_csv(path)
    assert list(df.columns) == ["k1", "k2", "real", "imag"]
    assert len(df) == grid.size
    assert df["k1"].min() == -4 and df["k1"].max() == 3


def test_field_csv_size_limit(tmp_path):
    grid = Grid(3, 64, 1.0)
    with pytest.raises(ValueError, match="CSV output is limited"):
        SpectralField.zeros(grid).to_csv(tmp_path / "big.csv")


def test_trajectory_netcdf_reopen(tmp_path, grid_1d, params_1d):
    trajectory = _small_trajectory(grid_1d, params_1d)
    path = tmp_path / "trajectory.nc"
    trajectory.to_netcdf(path)

    with xr.open_dataset(path) as reopened:
        assert grid_from_dataset(reopened) == grid_1d
        xr.testing.assert_allclose(reopened["u"], trajectory["u"])
        assert reopened.attrs["status"] == trajectory.attrs["status"]
        assert reopened.attrs["param_sigma"] == 1.5


def test_grid_recovered_from_cf_axes(grid_2d):
    coords = grid_2d.coords()
    coords.attrs = {}
    assert grid_from_dataset(coords) == grid_2d


def test_grid_from_dataset_without_axes():
    with pytest.raises(ValueError, match="no spatial axes"):
        grid_from_dataset(xr.Dataset({"a": ("time", [1.0])}))


def test_trajectory_to_csv(tmp_path, grid_1d, params_1d):
    trajectory = _small_trajectory(grid_1d, params_1d, store_fields=False)
    path = trajectory_to_csv(trajectory, tmp_path / "trajectory.csv")
    df = pd.read_csv(path)
    assert tuple(df.columns) == TRAJECTORY_COLUMNS
    assert df["t"].iloc[0] == 0.0
    np.testing.assert_allclose(df["t"].iloc[-1], 0.5)
    assert np.all(np.isfinite(df.drop(columns="t").values))
