from __future__ import annotations

import os
from typing import Iterable, Optional, Tuple, Union

import xarray as xr

from xsigma.criticality import DecayRateTable, solution_space_norm
from xsigma.experiments import SlopeFit, fit_slope
from xsigma.grid import Grid, grid_from_dataset
from xsigma.utils import dataset_to_csv


@xr.register_dataset_accessor("sigma")
class SigmaDatasetAccessor:
    """
    Xarray Accessor for trajectory Datasets.
    """

    def __init__(self, xarray_obj: xr.Dataset):
        """
        Initialize the Dataset accessor.

        Parameters
        ----------
        xarray_obj : xr.Dataset
            A trajectory produced by the integrator or a linear evolution.
        """
        self._obj = xarray_obj

    @property
    def grid(self) -> Grid:
        """The grid the trajectory was computed on."""
        return grid_from_dataset(self._obj)

    def fit_decay(
        self,
        quantity: str,
        window: Tuple[float, float],
        predicted: float,
        tolerance: float = 0.1,
    ) -> SlopeFit:
        """
        Fit the decay exponent of one tracked norm.

        Parameters
        ----------
        quantity : str
            Name of a norm variable, e.g. ``"l2_v"``.
        window : tuple of float
            Time window (t_lo, t_hi).
        predicted : float
            Expected exponent.
        tolerance : float, default 0.1
            One-sided acceptance tolerance.

        Returns
        -------
        SlopeFit
            Fit of log(norm) against log(1 + t).
        """
        if quantity not in self._obj:
            raise ValueError(f"Trajectory has no variable '{quantity}'.")
        return fit_slope(
            self._obj["time"].values,
            self._obj[quantity].values,
            window,
            predicted,
            quantity=quantity,
            tolerance=tolerance,
        )

    def solution_norm(self, table: DecayRateTable) -> xr.DataArray:
        """Running weighted norm of the global solution space."""
        return solution_space_norm(self._obj, table)

    def to_csv(
        self,
        path: Union[str, os.PathLike],
        columns: Optional[Iterable[str]] = None,
    ) -> str:
        """
        Write the time-indexed variables as CSV.

        Parameters
        ----------
        path : str or path-like
            Output file.
        columns : iterable of str, optional
            Columns to keep, in order; defaults to every time-only variable.

        Returns
        -------
        str
            The path written.
        """
        names = [k for k, v in self._obj.data_vars.items() if v.dims == ("time",)]
        return dataset_to_csv(self._obj[names], path, columns=columns)
