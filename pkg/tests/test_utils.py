import json

import numpy as np
import pytest
import xarray as xr

from xsigma.utils import (
    ConfigError,
    conjugate,
    dataset_to_csv,
    load_toml,
    package_version,
    positive_part,
    update_history,
    write_manifest,
)


def test_update_history_prepends():
    ds = xr.Dataset()
    update_history(ds, "first")
    update_history(ds, "second")
    lines = ds.attrs["history"].split("\n")
    assert lines[0].endswith("second")
    assert lines[1].endswith("first")


def test_conjugate():
    assert conjugate(2.0) == 2.0
    assert conjugate(np.inf) == 1.0
    np.testing.assert_allclose(conjugate(3.0), 1.5)
    with pytest.raises(ValueError, match="k > 1"):
        conjugate(1.0)


def test_positive_part():
    np.testing.assert_array_equal(positive_part(np.array([-1.0, 0.5])), [0.0, 0.5])


def test_load_toml(tmp_path):
    path = tmp_path / "ok.toml"
    path.write_text("[model]\nsigma = 1.5\n")
    assert load_toml(path) == {"model": {"sigma": 1.5}}


def test_load_toml_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_toml(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("[model\nsigma = ")
    with pytest.raises(ConfigError, match="Could not parse"):
        load_toml(bad)


def test_dataset_to_csv_format_and_columns(tmp_path):
    ds = xr.Dataset({"b": ("t", [1.0 / 3.0, 2.0]), "a": ("t", [1, 2])}, coords={"t": [0.0, 1.0]})
    path = dataset_to_csv(ds, tmp_path / "out.csv", columns=["t", "a", "b"])
    with open(path) as f:
        rows = f.read().splitlines()
    assert rows[0] == "t,a,b"
    assert rows[1] == "0,1,0.333333333333"


def test_write_manifest_handles_numpy(tmp_path):
    path = write_manifest(
        tmp_path / "manifest.json",
        {"b": np.float64(0.5), "a": np.arange(3), "c": np.bool_(True)},
    )
    with open(path) as f:
        text = f.read()
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": [0, 1, 2], "b": 0.5, "c": True}


def test_package_version_is_a_string():
    assert isinstance(package_version(), str)
