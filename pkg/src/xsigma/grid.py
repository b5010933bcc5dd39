from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Tuple

import numpy as np
import xarray as xr

try:
    import cf_xarray  # noqa: F401
except ImportError:
    cf_xarray = None

_AXIS_NAMES = ("x", "y", "z")
_CF_AXES = ("X", "Y", "Z")


@dataclass(frozen=True)
class Grid:
    """
    Periodic box [-L, L)^n with N points per axis.

    Parameters
    ----------
    dim : int
        Space dimension, 1, 2 or 3.
    points_per_axis : int
        N, an even power of two, at least 8.
    half_width : float
        L > 0.
    """

    dim: int
    points_per_axis: int
    half_width: float

    def __post_init__(self) -> None:
        if self.dim not in (1, 2, 3):
            raise ValueError(f"Grid dimension must be 1, 2 or 3, got {self.dim}.")
        n_pts = self.points_per_axis
        if n_pts < 8 or n_pts & (n_pts - 1):
            raise ValueError(
                f"points_per_axis must be a power of two >= 8, got {n_pts}."
            )
        if not self.half_width > 0:
            raise ValueError(f"half_width must be positive, got {self.half_width}.")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.points_per_axis

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_axis**self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def volume(self) -> float:
        return (2.0 * self.half_width) ** self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        """Physical points -L + j dx, j = 0..N-1."""
        return -self.half_width + self.spacing * np.arange(self.points_per_axis)

    @cached_property
    def wavenumber_index(self) -> np.ndarray:
        """Integer k per axis in FFT storage order."""
        n_pts = self.points_per_axis
        return np.fft.fftfreq(n_pts, d=1.0 / n_pts).astype(np.int64)

    @cached_property
    def frequencies(self) -> np.ndarray:
        """Per-axis wavenumbers pi k / L in FFT storage order."""
        return np.pi * self.wavenumber_index / self.half_width

    @cached_property
    def positions(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.axis] * self.dim), indexing="ij"))

    @cached_property
    def radius(self) -> np.ndarray:
        """|x| on the full mesh."""
        return np.sqrt(sum(x**2 for x in self.positions))

    @cached_property
    def xi_mag(self) -> np.ndarray:
        """|xi| on the full mesh, FFT storage order."""
        mesh = np.meshgrid(*([self.frequencies] * self.dim), indexing="ij")
        return np.sqrt(sum(k**2 for k in mesh))

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True where any axis index equals -N/2."""
        kmin = -self.points_per_axis // 2
        mesh = np.meshgrid(*([self.wavenumber_index] * self.dim), indexing="ij")
        mask = np.zeros(self.shape, dtype=bool)
        for k in mesh:
            mask |= k == kmin
        return mask

    @cached_property
    def phase(self) -> np.ndarray:
        """(-1)^(k_1 + ... + k_n); shifts the transform origin from x=-L to x=0."""
        mesh = np.meshgrid(*([self.wavenumber_index] * self.dim), indexing="ij")
        total = sum(mesh)
        return np.where(total % 2 == 0, 1.0, -1.0)

    @property
    def k_max(self) -> float:
        """Largest per-axis wavenumber magnitude pi N / (2L)."""
        return np.pi * (self.points_per_axis // 2) / self.half_width

    @property
    def dims(self) -> Tuple[str, ...]:
        return _AXIS_NAMES[: self.dim]

    def coords(self) -> xr.Dataset:
        """
        Coordinate dataset of the grid with CF axis attributes.

        Returns
        -------
        xr.Dataset
            Dataset holding the x[, y, z] coordinates.
        """
        coords = {
            name: (
                [name],
                self.axis,
                {"axis": cf_axis, "long_name": f"{name} position", "units": "1"},
            )
            for name, cf_axis in zip(self.dims, _CF_AXES)
        }
        ds = xr.Dataset(coords=coords)
        ds.attrs.update(self.to_attrs())
        return ds

    def to_attrs(self) -> dict:
        return {
            "grid_dim": self.dim,
            "grid_points_per_axis": self.points_per_axis,
            "grid_half_width": float(self.half_width),
        }

    def __repr__(self) -> str:
        return (
            f"Grid(dim={self.dim}, N={self.points_per_axis}, "
            f"L={self.half_width}, dx={self.spacing:.4g})"
        )


def grid_from_dataset(ds: xr.Dataset) -> Grid:
    """
    Recover the Grid a dataset was produced on.

    Grid attributes are used when present; otherwise the spatial axes are
    located through their CF ``axis`` attributes.

    Parameters
    ----------
    ds : xr.Dataset
        Trajectory or coordinate dataset.

    Returns
    -------
    Grid
        The matching grid.
    """
    if "grid_points_per_axis" in ds.attrs:
        return Grid(
            int(ds.attrs["grid_dim"]),
            int(ds.attrs["grid_points_per_axis"]),
            float(ds.attrs["grid_half_width"]),
        )
    if cf_xarray is not None:
        names = [ds.cf.axes[a][0] for a in _CF_AXES if a in ds.cf.axes]
    else:
        names = [n for n in _AXIS_NAMES if n in ds.coords]
    if not names:
        raise ValueError("Dataset carries no spatial axes to rebuild a grid from.")
    axis = ds[names[0]].values
    spacing = float(axis[1] - axis[0])
    return Grid(len(names), axis.size, spacing * axis.size / 2.0)
