import os
from setuptools import setup

# Use tomllib (Python 3.11+) or tomli
try:
    import tomllib
except ImportError:
    try:
        import tomli as tomllib
    except ImportError:
        tomllib = None

# Must be kept in sync with [tool.xsigma] in pyproject.toml
DEFAULT_DEPS = [
    "xarray",
    "numpy",
    "scipy",
    "pandas",
    "dask",
    "netCDF4",
    "cf-xarray",
    "tomli; python_version < '3.11'",
]


def get_install_requires():
    """Read runtime dependencies from the [tool.xsigma] table."""
    if not os.path.exists("pyproject.toml") or tomllib is None:
        return DEFAULT_DEPS
    try:
        with open("pyproject.toml", "rb") as f:
            data = tomllib.load(f)
    except (OSError, tomllib.TOMLDecodeError):
        return DEFAULT_DEPS
    deps = data.get("tool", {}).get("xsigma", {}).get("dependencies", DEFAULT_DEPS)

    # XSIGMA_NO_NETCDF skips the netCDF backend on hosts that only need the
    # CSV outputs; field snapshots then cannot be saved.
    if os.environ.get("XSIGMA_NO_NETCDF"):
        deps = [d for d in deps if d != "netCDF4"]
    return deps


if __name__ == "__main__":
    setup(
        install_requires=get_install_requires(),
    )
