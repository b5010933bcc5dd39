from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Optional, Union

import numpy as np
import scipy.fft
import xarray as xr

from xsigma.grid import Grid
from xsigma.params import ModelParams
from xsigma.utils import dataset_to_csv

# Header of the flat binary layout: dim, N (int64) and L (float64).
_HEADER_DTYPE = np.dtype([("dim", "<i8"), ("n", "<i8"), ("half_width", "<f8")])
_CSV_MAX_SIZE = 2**16


@dataclass(frozen=True, eq=False)
class SpectralField:
    """
    Fourier coefficients of a scalar field on a periodic grid.

    Coefficients are stored in FFT order with shape ``grid.shape`` and are
    normalized as Fourier-series coefficients, so that
    ``f(x) = sum_k c_k exp(i xi_k . x)``. The array is read-only.

    Parameters
    ----------
    grid : Grid
        The grid the field lives on.
    coefficients : np.ndarray
        Complex array of N^n entries; flat arrays are reshaped.
    """

    grid: Grid
    coefficients: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        coeffs = np.asarray(self.coefficients, dtype=np.complex128)
        if coeffs.size != self.grid.size:
            raise ValueError(
                f"Expected {self.grid.size} coefficients for {self.grid}, got {coeffs.size}."
            )
        coeffs = coeffs.reshape(self.grid.shape).copy()
        coeffs.flags.writeable = False
        object.__setattr__(self, "coefficients", coeffs)

    @classmethod
    def zeros(cls, grid: Grid) -> "SpectralField":
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128))

    def with_coefficients(self, coefficients: np.ndarray) -> "SpectralField":
        return SpectralField(self.grid, coefficients)

    def to_physical(self, real: bool = True) -> np.ndarray:
        return to_physical(self, real=real)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.coefficients)))

    def conjugate_symmetry_error(self) -> float:
        """
        Relative deviation from c(-k) = conj(c(k)), Nyquist modes excluded.
        """
        c = np.where(self.grid.nyquist_mask, 0.0, self.coefficients)
        flipped = c
        for axis in range(self.grid.dim):
            flipped = np.roll(np.flip(flipped, axis=axis), 1, axis=axis)
        scale = np.max(np.abs(c))
        if scale == 0:
            return 0.0
        return float(np.max(np.abs(c - np.conj(flipped))) / scale)

    def sorted_coefficients(self) -> np.ndarray:
        """Coefficients in ascending wavenumber order (k = -N/2 .. N/2-1)."""
        return np.fft.fftshift(self.coefficients)

    def to_binary(self, path: Union[str, os.PathLike]) -> str:
        """
        Write the field in the flat binary layout.

        The header holds dim, N and L as 64-bit values; the payload is the
        interleaved real/imag parts in row-major ascending wavenumber order.
        """
        header = np.array(
            [(self.grid.dim, self.grid.points_per_axis, self.grid.half_width)],
            dtype=_HEADER_DTYPE,
        )
        payload = np.ascontiguousarray(self.sorted_coefficients()).view("<f8")
        with open(path, "wb") as f:
            f.write(header.tobytes())
            f.write(payload.tobytes())
        return str(path)

    @classmethod
    def from_binary(cls, path: Union[str, os.PathLike]) -> "SpectralField":
        with open(path, "rb") as f:
            raw = f.read()
        header = np.frombuffer(raw[: _HEADER_DTYPE.itemsize], dtype=_HEADER_DTYPE)[0]
        grid = Grid(int(header["dim"]), int(header["n"]), float(header["half_width"]))
        payload = np.frombuffer(raw[_HEADER_DTYPE.itemsize :], dtype="<f8")
        if payload.size != 2 * grid.size:
            raise ValueError(
                f"{path}: payload holds {payload.size // 2} coefficients, expected {grid.size}."
            )
        coeffs = payload.view(np.complex128).reshape(grid.shape)
        return cls(grid, np.fft.ifftshift(coeffs))

    def to_dataset(self) -> xr.Dataset:
        """Coefficients indexed by integer wavenumbers in ascending order."""
        n_pts = self.grid.points_per_axis
        k = np.arange(-n_pts // 2, n_pts // 2)
        dims = [f"k{i + 1}" for i in range(self.grid.dim)]
        coeffs = self.sorted_coefficients()
        ds = xr.Dataset(
            {
                "real": (dims, coeffs.real),
                "imag": (dims, coeffs.imag),
            },
            coords={d: k for d in dims},
        )
        ds.attrs.update(self.grid.to_attrs())
        return ds

    def to_csv(self, path: Union[str, os.PathLike]) -> str:
        """Write one row per wavenumber tuple; only for small grids."""
        if self.grid.size > _CSV_MAX_SIZE:
            raise ValueError(
                f"CSV output is limited to {_CSV_MAX_SIZE} coefficients, field has {self.grid.size}."
            )
        return dataset_to_csv(self.to_dataset(), path)

    def __repr__(self) -> str:
        return f"SpectralField({self.grid!r})"


class NormReport(NamedTuple):
    """Norms of one field at one time."""

    l1: float
    l2: float
    lq: float
    linf: float
    hdot_sigma: float
    time: float = 0.0
    finite: bool = True


class GNExponent(NamedTuple):
    theta: float
    admissible: bool


def to_spectral(values: np.ndarray, grid: Grid) -> SpectralField:
    """
    Transform physical samples to Fourier-series coefficients.

    Parameters
    ----------
    values : np.ndarray
        N^n real (or complex) samples at ``grid.positions``.
    grid : Grid
        The grid.

    Returns
    -------
    SpectralField
        The coefficients.
    """
    arr = np.asarray(values)
    if arr.size != grid.size:
        raise ValueError(
            f"Expected {grid.size} samples for {grid}, got {arr.size}."
        )
    if not np.all(np.isfinite(arr)):
        n_bad = int(np.count_nonzero(~np.isfinite(arr)))
        raise ValueError(f"Cannot transform non-finite data ({n_bad} bad samples).")
    arr = arr.reshape(grid.shape)
    coeffs = scipy.fft.fftn(arr, norm="forward") * grid.phase
    return SpectralField(grid, coeffs)


def to_physical(f: SpectralField, real: bool = True) -> np.ndarray:
    """
    Evaluate a field at the grid points.

    Parameters
    ----------
    f : SpectralField
        The coefficients.
    real : bool, default True
        Return the real part only.

    Returns
    -------
    np.ndarray
        Samples with shape ``grid.shape``.
    """
    values = scipy.fft.ifftn(f.coefficients * f.grid.phase, norm="forward")
    return values.real if real else values


def imag_residue(f: SpectralField) -> float:
    """Largest imaginary part of the physical samples relative to the real part."""
    values = to_physical(f, real=False)
    scale = np.max(np.abs(values.real))
    if scale == 0:
        return float(np.max(np.abs(values.imag)))
    return float(np.max(np.abs(values.imag)) / scale)


def fractional_multiplier(grid: Grid, power: float) -> np.ndarray:
    """|xi|^(2 power) with the Nyquist modes zeroed."""
    mult = grid.xi_mag ** (2.0 * power)
    mult[grid.nyquist_mask] = 0.0
    return mult


def apply_fractional_laplacian(f: SpectralField, power: float) -> SpectralField:
    """
    Apply (-Delta)^power as the multiplier |xi|^(2 power).

    Parameters
    ----------
    f : SpectralField
        Input field.
    power : float
        gamma > 0.

    Returns
    -------
    SpectralField
        The transformed field; the xi = 0 and Nyquist coefficients are zero.
    """
    if not power > 0:
        raise ValueError(f"Fractional Laplacian power must be positive, got {power}.")
    return f.with_coefficients(f.coefficients * fractional_multiplier(f.grid, power))


@lru_cache(maxsize=16)
def spectral_filter(grid: Grid, strength: float = 36.0, order: int = 36) -> np.ndarray:
    """
    Exponential filter exp(-strength (|k| / k_max)^order) on the full mesh.

    Parameters
    ----------
    grid : Grid
        The grid.
    strength : float, default 36.0
        Damping at |k| = k_max, in e-folds.
    order : int, default 36
        Filter order.

    Returns
    -------
    np.ndarray
        Read-only filter array with Nyquist modes zeroed.
    """
    ratio = grid.xi_mag / grid.k_max
    filt = np.exp(-strength * ratio**order)
    filt[grid.nyquist_mask] = 0.0
    filt.flags.writeable = False
    return filt


def lp_norm(values: np.ndarray, exponent: float, cell_volume: float) -> float:
    """Rectangle-rule L^p norm of grid samples."""
    abs_vals = np.abs(values)
    if np.isinf(exponent):
        return float(np.max(abs_vals))
    return float((np.sum(abs_vals**exponent) * cell_volume) ** (1.0 / exponent))


def l2_from_coefficients(f: SpectralField) -> float:
    """L^2 norm by Plancherel."""
    return float(np.sqrt(f.grid.volume * np.sum(np.abs(f.coefficients) ** 2)))


def hdot_norm(f: SpectralField, s: float) -> float:
    """Homogeneous Sobolev norm || |D|^s f ||_{L^2} by Parseval."""
    weights = f.grid.xi_mag ** (2.0 * s)
    return float(
        np.sqrt(f.grid.volume * np.sum(weights * np.abs(f.coefficients) ** 2))
    )


def norms(f: SpectralField, params: ModelParams, time: float = 0.0) -> NormReport:
    """
    All norms of one field used by the solution spaces.

    Parameters
    ----------
    f : SpectralField
        The field.
    params : ModelParams
        Supplies q (for the L^q norm) and sigma (for the H^sigma norm).
    time : float, default 0.0
        Time stamp stored in the report.

    Returns
    -------
    NormReport
        Norms; entries are +inf and ``finite`` is False for non-finite fields.
    """
    if not f.is_finite():
        inf = float("inf")
        return NormReport(inf, inf, inf, inf, inf, time, False)
    values = to_physical(f)
    dv = f.grid.cell_volume
    return NormReport(
        l1=lp_norm(values, 1.0, dv),
        l2=lp_norm(values, 2.0, dv),
        lq=lp_norm(values, params.q, dv),
        linf=lp_norm(values, np.inf, dv),
        hdot_sigma=hdot_norm(f, params.sigma),
        time=float(time),
        finite=True,
    )


def gn_theta(s: float, a: float, q: float, q1: float, q2: float, n: float) -> GNExponent:
    """
    Interpolation exponent of the fractional Gagliardo-Nirenberg inequality.

    theta = (1/q1 - 1/q + s/n) / (1/q1 - 1/q2 + a/n).

    Parameters
    ----------
    s, a : float
        Derivative orders, 0 <= s < a.
    q, q1, q2 : float
        Lebesgue exponents, all > 1.
    n : float
        Dimension.

    Returns
    -------
    GNExponent
        theta and whether s/a <= theta <= 1.
    """
    denom = 1.0 / q1 - 1.0 / q2 + a / n
    if denom == 0:
        raise ValueError(
            f"Gagliardo-Nirenberg denominator vanishes for q1={q1}, q2={q2}, a={a}, n={n}."
        )
    theta = (1.0 / q1 - 1.0 / q + s / n) / denom
    return GNExponent(theta, bool(s / a <= theta <= 1.0))


def gagliardo_nirenberg_ratio(
    f: SpectralField, q: float, q1: float, a: float, s: float = 0.0
) -> float:
    """
    ||D^s f||_{L^q} / (||f||_{L^q1}^(1-theta) || |D|^a f ||_{L^2}^theta).

    The inequality holds with some constant C whenever the ratio stays
    bounded over a family of fields.
    """
    grid = f.grid
    theta, admissible = gn_theta(s, a, q, q1, 2.0, grid.dim)
    if not admissible:
        raise ValueError(f"theta={theta:.4g} is outside [s/a, 1] for these exponents.")
    lhs_field = apply_fractional_laplacian(f, s / 2.0) if s > 0 else f
    lhs = lp_norm(to_physical(lhs_field), q, grid.cell_volume)
    low = lp_norm(to_physical(f), q1, grid.cell_volume)
    high = hdot_norm(f, a)
    return lhs / (low ** (1.0 - theta) * high**theta)


def field_from_function(grid: Grid, func, *args, **kwargs) -> SpectralField:
    """Sample ``func(*positions)`` on the grid and transform it."""
    return to_spectral(func(*grid.positions, *args, **kwargs), grid)


def gaussian_field(
    grid: Grid, amplitude: float = 1.0, width: float = 1.0, center: Optional[np.ndarray] = None
) -> SpectralField:
    """amplitude * exp(-|x - center|^2 / width^2)."""
    center = np.zeros(grid.dim) if center is None else np.asarray(center, dtype=float)
    r2 = sum((x - c) ** 2 for x, c in zip(grid.positions, center))
    return to_spectral(amplitude * np.exp(-r2 / width**2), grid)
