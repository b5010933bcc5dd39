from __future__ import annotations

import datetime
import json
import os
from typing import Any, Iterable, Optional, Union

import numpy as np
import xarray as xr

try:
    import tomllib
except ImportError:
    try:
        import tomli as tomllib
    except ImportError:
        tomllib = None


class ConfigError(ValueError):
    """Raised when an experiment configuration cannot be used."""


def update_history(
    obj: Union[xr.DataArray, xr.Dataset], message: str
) -> Union[xr.DataArray, xr.Dataset]:
    """
    Update the 'history' attribute of an xarray object with a timestamped message.

    Parameters
    ----------
    obj : xr.DataArray or xr.Dataset
        The xarray object to update.
    message : str
        The message to add to the history.

    Returns
    -------
    xr.DataArray or xr.Dataset
        The updated xarray object.
    """
    timestamp = datetime.datetime.now().strftime("%Y-%m-%d %H:%M:%S")
    full_message = f"{timestamp}: {message}"
    if "history" in obj.attrs:
        obj.attrs["history"] = f"{full_message}\n" + obj.attrs["history"]
    else:
        obj.attrs["history"] = full_message
    return obj


def positive_part(value: Any) -> Any:
    """Return ``max(value, 0)`` elementwise."""
    return np.maximum(value, 0.0)


def conjugate(exponent: float) -> float:
    """
    Hölder conjugate ``k / (k - 1)`` of an exponent ``k > 1``.

    ``inf`` maps to 1.
    """
    if exponent <= 1:
        raise ValueError(f"Conjugate exponent requires k > 1, got {exponent}.")
    if np.isinf(exponent):
        return 1.0
    return exponent / (exponent - 1.0)


def load_toml(path: Union[str, os.PathLike]) -> dict:
    """
    Read a TOML file into a dictionary.

    Parameters
    ----------
    path : str or path-like
        Location of the TOML file.

    Returns
    -------
    dict
        Parsed content.
    """
    if tomllib is None:
        raise ImportError(
            "tomllib (Python 3.11+) or tomli is required to read configuration files."
        )
    if not os.path.exists(path):
        raise ConfigError(f"Configuration file not found: {path}")
    with open(path, "rb") as f:
        try:
            return tomllib.load(f)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"Could not parse {path}: {e}") from e


def dataset_to_csv(
    ds: xr.Dataset,
    path: Union[str, os.PathLike],
    columns: Optional[Iterable[str]] = None,
) -> str:
    """
    Write the data variables of a Dataset as CSV rows.

    Parameters
    ----------
    ds : xr.Dataset
        Dataset whose variables share the row dimension(s).
    path : str or path-like
        Output file.
    columns : iterable of str, optional
        Column order. Index coordinates are always written first.

    Returns
    -------
    str
        The path written.
    """
    df = ds.to_dataframe().reset_index()
    if columns is not None:
        df = df[list(columns)]
    # Fixed float format keeps reruns byte-identical.
    df.to_csv(path, index=False, float_format="%.12g")
    return str(path)


def write_manifest(path: Union[str, os.PathLike], manifest: dict) -> str:
    """
    Write a JSON run manifest.

    Parameters
    ----------
    path : str or path-like
        Output file.
    manifest : dict
        JSON-serializable content; numpy scalars are converted.

    Returns
    -------
    str
        The path written.
    """

    def _default(obj: Any) -> Any:
        if isinstance(obj, np.generic):
            return obj.item()
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        return str(obj)

    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True, default=_default)
    return str(path)


def package_version() -> str:
    """Installed version of xsigma, or ``"unknown"`` for source checkouts."""
    try:
        from importlib.metadata import PackageNotFoundError, version
    except ImportError:  # pragma: no cover
        return "unknown"
    try:
        return version("xsigma")
    except PackageNotFoundError:
        return "unknown"
