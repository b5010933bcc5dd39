from __future__ import annotations

import dataclasses
import os
import time
import warnings
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.stats
import xarray as xr

from xsigma.core import NormReport, hdot_norm, norms, to_physical, to_spectral
from xsigma.criticality import (
    RegionMap,
    Verdict,
    classify,
    emit_region_map,
    lifespan_exponent,
    region_regime,
    decay_rate_table,
)
from xsigma.grid import Grid
from xsigma.integrator import DuhamelIntegrator, IntegratorControls, initial_state
from xsigma.params import ModelParams
from xsigma.parallel import _functional_task, _lifespan_task, run_tasks
from xsigma.propagators import Equation, evolve_linear, predicted_linear_rates
from xsigma.testfunctions import (
    REPORT_COLUMNS,
    DecayCertificate,
    TestFunctionSet,
    WeakResidual,
    build_eta,
    check_keystone_inequalities,
    frac_laplacian_phi,
    phi_profile,
    scaling_identity_error,
    sweep_radii,
    weak_residual,
)
from xsigma.utils import (
    ConfigError,
    dataset_to_csv,
    load_toml,
    package_version,
    update_history,
    write_manifest,
)

WRAP_FRACTION = 0.8
BAND_ENERGY_TOL = 1e-6
MIN_FIT_SAMPLES = 5
LINEAR_CLOSENESS = 10.0
SCALING_TOL = 1e-6
SCALING_POWERS = (0.3, 0.5, 0.9)
SCALING_RADII = (2.0, 4.0, 8.0)


class ExperimentAborted(RuntimeError):
    """Raised when a run contradicts the assumptions of its experiment."""


@dataclass(frozen=True)
class LifespanSettings:
    t_max: float = 200.0
    samples: int = 400
    refinement: str = "dt"
    slope_tol: float = 0.2
    refinement_tol: float = 0.05

    def __post_init__(self) -> None:
        if self.refinement not in ("dt", "grid"):
            raise ConfigError(f"lifespan.refinement must be 'dt' or 'grid', got '{self.refinement}'.")


@dataclass(frozen=True)
class RegionSettings:
    p_min: float = 1.05
    p_max: float = 12.0
    q_min: float = 1.05
    q_max: float = 12.0
    num: int = 200
    chunks: Optional[int] = None


@dataclass(frozen=True)
class TestfnSettings:
    __test__ = False

    radii: Tuple[float, ...] = (1.0, 1.25, 1.5, 1.75, 2.0)
    regularity: int = 10
    samples: int = 400


_SCHEMA = {
    "model": {"sigma", "dim", "p", "q", "eps_slack", "sigma_bar", "equations"},
    "grid": {"points", "half_width"},
    "data": {"shape", "width", "epsilon", "epsilons", "seed", "n_bumps"},
    "integrator": {
        "dt0",
        "dt_min",
        "dt_max",
        "order",
        "filter",
        "adaptive",
        "shrink_tol",
        "grow_tol",
        "blowup_factor",
        "max_steps",
        "store_fields",
    },
    "fit": {"t_lo", "t_hi", "t_end", "samples", "tolerance"},
    "output": {"dir"},
    "run": {"workers"},
    "lifespan": {f.name for f in dataclasses.fields(LifespanSettings)},
    "region_map": {f.name for f in dataclasses.fields(RegionSettings)},
    "testfn": {f.name for f in dataclasses.fields(TestfnSettings)},
}


@dataclass
class ExperimentConfig:
    """
    Everything one experiment run needs.

    Parameters
    ----------
    params : ModelParams
        Exponents.
    grid : Grid or None
        Simulation grid; None for formula-only runs (non-integer dimension).
    shape, width : str, float
        Initial-data family and width.
    epsilon : float
        Data size of single runs.
    epsilons : tuple of float
        Strictly decreasing data sizes of a lifespan sweep.
    seed : int, optional
        Seed of randomized data families.
    controls : IntegratorControls
        Integrator settings.
    equations : tuple of str
        Linear problems covered by ``linear-decay``.
    t_lo, t_hi : float
        Fit window; ``t_hi`` defaults to 0.8 of the wrap-around time.
    t_end : float, optional
        Integration end; defaults to ``t_hi``.
    samples : int
        Output samples per trajectory.
    tolerance : float
        One-sided slope tolerance of decay fits.
    output_dir : str
        Directory receiving CSV files and the manifest.
    workers : int
        Size of the local worker pool.
    """

    params: ModelParams
    grid: Optional[Grid] = None
    shape: str = "gaussian"
    width: float = 1.0
    epsilon: float = 1.0
    epsilons: Tuple[float, ...] = ()
    seed: Optional[int] = None
    n_bumps: int = 3
    controls: IntegratorControls = field(default_factory=IntegratorControls)
    equations: Tuple[str, ...] = ("friction", "visco")
    t_lo: float = 20.0
    t_hi: Optional[float] = None
    t_end: Optional[float] = None
    samples: int = 200
    tolerance: float = 0.1
    output_dir: str = "results"
    workers: int = 1
    lifespan: LifespanSettings = field(default_factory=LifespanSettings)
    region: RegionSettings = field(default_factory=RegionSettings)
    testfn: TestfnSettings = field(default_factory=TestfnSettings)

    def __post_init__(self) -> None:
        eps = np.asarray(self.epsilons, dtype=float)
        if eps.size and (np.any(eps <= 0) or np.any(np.diff(eps) >= 0)):
            raise ConfigError(f"epsilons must be positive and strictly decreasing, got {self.epsilons}.")
        if self.t_hi is not None and not self.t_lo < self.t_hi:
            raise ConfigError(f"Fit window needs t_lo < t_hi, got ({self.t_lo}, {self.t_hi}).")
        if self.samples < MIN_FIT_SAMPLES:
            raise ConfigError(f"samples must be at least {MIN_FIT_SAMPLES}, got {self.samples}.")
        if self.workers < 1:
            raise ConfigError(f"workers must be at least 1, got {self.workers}.")
        for eq in self.equations:
            try:
                Equation(eq)
            except ValueError:
                raise ConfigError(f"Unknown equation '{eq}'.") from None

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> "ExperimentConfig":
        """Build a configuration from parsed TOML tables."""
        for section, table in raw.items():
            if section not in _SCHEMA:
                raise ConfigError(f"Unknown config section [{section}].")
            if not isinstance(table, dict):
                raise ConfigError(f"[{section}] must be a table.")
            unknown = set(table) - _SCHEMA[section]
            if unknown:
                raise ConfigError(f"Unknown keys in [{section}]: {sorted(unknown)}.")

        model = dict(raw.get("model", {}))
        grid_t = raw.get("grid", {})
        data = raw.get("data", {})
        integ = raw.get("integrator", {})
        fit = raw.get("fit", {})
        try:
            params = ModelParams(
                sigma=float(model["sigma"]),
                dim=float(model["dim"]),
                p=float(model["p"]),
                q=float(model["q"]),
                eps_slack=float(model.get("eps_slack", 0.01)),
                sigma_bar_choice=float(model.get("sigma_bar", 0.5)),
            )
        except KeyError as e:
            raise ConfigError(f"[model] is missing {e}.") from None
        except ValueError as e:
            raise ConfigError(str(e)) from None

        grid = None
        if params.dim in (1, 2, 3):
            try:
                grid = Grid(
                    int(params.dim),
                    int(grid_t.get("points", 256)),
                    float(grid_t.get("half_width", 64.0)),
                )
            except ValueError as e:
                raise ConfigError(str(e)) from None
        elif grid_t:
            raise ConfigError(f"A grid needs an integer dimension in 1..3, got dim={params.dim}.")

        controls_kw = {k: integ[k] for k in integ if k != "filter"}
        if "filter" in integ:
            controls_kw["use_filter"] = bool(integ["filter"])
        try:
            controls = IntegratorControls(**controls_kw)
            lifespan = LifespanSettings(**raw.get("lifespan", {}))
            region = RegionSettings(**raw.get("region_map", {}))
            testfn_t = dict(raw.get("testfn", {}))
            if "radii" in testfn_t:
                testfn_t["radii"] = tuple(float(r) for r in testfn_t["radii"])
            testfn = TestfnSettings(**testfn_t)
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from None

        return cls(
            params=params,
            grid=grid,
            shape=data.get("shape", "gaussian"),
            width=float(data.get("width", 1.0)),
            epsilon=float(data.get("epsilon", 1.0)),
            epsilons=tuple(float(e) for e in data.get("epsilons", ())),
            seed=data.get("seed"),
            n_bumps=int(data.get("n_bumps", 3)),
            controls=controls,
            equations=tuple(model.get("equations", ("friction", "visco"))),
            t_lo=float(fit.get("t_lo", 20.0)),
            t_hi=fit.get("t_hi"),
            t_end=fit.get("t_end"),
            samples=int(fit.get("samples", 200)),
            tolerance=float(fit.get("tolerance", 0.1)),
            output_dir=str(raw.get("output", {}).get("dir", "results")),
            workers=int(raw.get("run", {}).get("workers", 1)),
            lifespan=lifespan,
            region=region,
            testfn=testfn,
        )

    @classmethod
    def from_toml(cls, path: Union[str, os.PathLike]) -> "ExperimentConfig":
        return cls.from_dict(load_toml(path))

    def replace(self, **changes: Any) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def require_grid(self) -> Grid:
        if self.grid is None:
            raise ConfigError(f"This experiment needs a grid; dim={self.params.dim} is not 1, 2 or 3.")
        return self.grid

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["params"] = self.params.to_dict()
        out["grid"] = None if self.grid is None else self.grid.to_attrs()
        return out


def load_config(path: Union[str, os.PathLike]) -> ExperimentConfig:
    """Read an experiment configuration from a TOML file."""
    return ExperimentConfig.from_toml(path)


@dataclass(frozen=True)
class SlopeFit:
    """
    Least-squares slope of log(values) against log(shift + abscissa).

    ``passed`` applies the acceptance rule the fit was made with: one-sided
    (slope <= predicted + tolerance) or relative
    (|slope - predicted| <= tolerance |predicted|).
    """

    quantity: str
    slope: float
    intercept: float
    r_squared: float
    window: Tuple[float, float]
    predicted: float
    deviation: float
    n_samples: int
    tolerance: float
    passed: bool


def fit_slope(
    x: Sequence[float],
    values: Sequence[float],
    window: Tuple[float, float],
    predicted: float,
    quantity: str = "",
    tolerance: float = 0.1,
    shift: float = 1.0,
    acceptance: str = "upper",
) -> SlopeFit:
    """
    Fit the log-log slope of ``values`` over ``window``.

    Parameters
    ----------
    x, values : sequence of float
        Abscissa (time or data size) and the positive quantity.
    window : tuple of float
        Inclusive abscissa range.
    predicted : float
        Expected exponent.
    quantity : str
        Label stored in the fit.
    tolerance : float, default 0.1
        Acceptance tolerance.
    shift : float, default 1.0
        Fit against log(shift + x); 1 for times, 0 for data sizes.
    acceptance : {"upper", "relative"}
        One-sided or relative acceptance.

    Returns
    -------
    SlopeFit
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(values, dtype=float)
    lo, hi = window
    keep = (x >= lo) & (x <= hi) & np.isfinite(y) & (y > 0)
    n = int(np.count_nonzero(keep))
    if n < MIN_FIT_SAMPLES:
        raise ValueError(
            f"Fit of '{quantity}' needs at least {MIN_FIT_SAMPLES} samples in {window}, got {n}."
        )
    result = scipy.stats.linregress(np.log(shift + x[keep]), np.log(y[keep]))
    slope = float(result.slope)
    deviation = slope - predicted
    if acceptance == "upper":
        passed = slope <= predicted + tolerance
    elif acceptance == "relative":
        passed = abs(deviation) <= tolerance * abs(predicted)
    else:
        raise ValueError(f"Unknown acceptance rule '{acceptance}'.")
    return SlopeFit(
        quantity=quantity,
        slope=slope,
        intercept=float(result.intercept),
        r_squared=float(np.clip(result.rvalue**2, 0.0, 1.0)),
        window=(float(lo), float(hi)),
        predicted=float(predicted),
        deviation=float(deviation),
        n_samples=n,
        tolerance=float(tolerance),
        passed=bool(passed),
    )


def fits_to_dataset(fits: Sequence[SlopeFit]) -> xr.Dataset:
    """Tabulate slope fits, one row per quantity."""
    columns = ("slope", "intercept", "r_squared", "predicted", "deviation", "n_samples", "tolerance", "passed")
    ds = xr.Dataset(
        {c: ("quantity", np.array([getattr(f, c) for f in fits])) for c in columns},
        coords={"quantity": [f.quantity for f in fits]},
    )
    ds["window_lo"] = ("quantity", np.array([f.window[0] for f in fits]))
    ds["window_hi"] = ("quantity", np.array([f.window[1] for f in fits]))
    return ds


def wraparound_time(grid: Grid, params: ModelParams, data: Optional[np.ndarray] = None) -> float:
    """
    Time after which periodic images reach the center of the box.

    L divided by the largest |xi|^(sigma - 1) over the retained band of the
    data: non-zero, non-Nyquist modes whose spectral energy is at least
    ``BAND_ENERGY_TOL`` of the peak. The data default to a unit Gaussian.
    """
    if data is None:
        data = np.exp(-grid.radius**2)
    weight = np.abs(to_spectral(data, grid).coefficients) ** 2
    peak = float(np.max(weight))
    band = (grid.xi_mag > 0) & ~grid.nyquist_mask & (weight >= BAND_ENERGY_TOL * peak)
    if peak == 0 or not band.any():
        raise ValueError("Data has no energy in the resolved non-zero modes.")
    speed = float(np.max(grid.xi_mag[band])) ** (params.sigma - 1.0)
    return grid.half_width / speed


def _check_window(config: ExperimentConfig, t_wrap: float) -> Tuple[float, float]:
    limit = WRAP_FRACTION * t_wrap
    t_hi = limit if config.t_hi is None else float(config.t_hi)
    if t_hi > limit:
        raise ConfigError(
            f"Fit window ends at t={t_hi:.4g}, past {WRAP_FRACTION} of the wrap-around "
            f"time {t_wrap:.4g}; enlarge half_width or shorten the window."
        )
    if not config.t_lo < t_hi:
        raise ConfigError(f"Empty fit window ({config.t_lo}, {t_hi:.4g}).")
    return float(config.t_lo), t_hi


def _sample_times(t_end: float, samples: int) -> np.ndarray:
    """Samples equally spaced in log(1 + t), starting at 0."""
    return np.geomspace(1.0, 1.0 + t_end, samples) - 1.0


def _data(config: ExperimentConfig, epsilon: Optional[float] = None):
    grid = config.require_grid()
    eps = config.epsilon if epsilon is None else epsilon
    return initial_state(
        grid, config.params, eps, width=config.width, shape=config.shape,
        seed=config.seed, n_bumps=config.n_bumps,
    )


def linear_trajectory(
    grid: Grid,
    params: ModelParams,
    which: Union[Equation, str],
    data: np.ndarray,
    times: Sequence[float],
) -> xr.Dataset:
    """
    Norms of the exact linear solution with data (0, data) at given times.

    Variables carry the suffix ``u`` for the visco-elastic and ``v`` for the
    frictional problem: l2, lq, linf, hsigma, hess (|D|^2), the velocity L^2
    norm (``l2_ut`` / ``l2_vt``) and the energy |D|^sigma w + w_t.
    """
    which = Equation(which)
    w = "u" if which is Equation.VISCO else "v"
    data_hat = to_spectral(data, grid)
    rows = []
    for t in times:
        pos, vel = evolve_linear(data_hat, which, float(t), params)
        r = norms(pos, params, t)
        l2_t = norms(vel, params, t).l2
        rows.append(
            {
                f"l2_{w}": r.l2,
                f"lq_{w}": r.lq,
                f"linf_{w}": r.linf,
                f"hsigma_{w}": r.hdot_sigma,
                f"hess_{w}": hdot_norm(pos, 2.0),
                f"l2_{w}t": l2_t,
                f"energy_{w}": r.hdot_sigma + l2_t,
            }
        )
    ds = xr.Dataset(
        {k: ("time", np.array([row[k] for row in rows])) for k in rows[0]},
        coords={"time": ("time", np.asarray(times, dtype=float), {"axis": "T"})},
        attrs={"equation": which.value, **grid.to_attrs()},
    )
    return update_history(ds, f"Linear {which.value} trajectory for {params!r}.")


_ALIASES = {"l_alpha2_u": "linf_u"}


def _measured_variable(quantity: str) -> str:
    base = quantity[: -len("_from_l2")] if quantity.endswith("_from_l2") else quantity
    return _ALIASES.get(base, base)


@dataclass
class LinearDecayResult:
    fits: List[SlopeFit]
    trajectories: Dict[str, xr.Dataset]
    t_wrap: float

    @property
    def passed(self) -> bool:
        return all(f.passed for f in self.fits)


def run_linear_decay(config: ExperimentConfig) -> LinearDecayResult:
    """
    Decay-rate fits of the linear problems against their predicted exponents.

    Parameters
    ----------
    config : ExperimentConfig
        Experiment settings; nonlinear terms are not used.

    Returns
    -------
    LinearDecayResult
        One fit per predicted quantity with a measured counterpart.
    """
    grid, params = config.require_grid(), config.params
    state = _data(config)
    u1, v1 = to_physical(state.u_t), to_physical(state.v_t)
    t_wrap = min(wraparound_time(grid, params, u1), wraparound_time(grid, params, v1))
    window = _check_window(config, t_wrap)
    times = _sample_times(window[1], config.samples)

    fits, trajectories = [], {}
    for name in config.equations:
        which = Equation(name)
        data = u1 if which is Equation.VISCO else v1
        traj = linear_trajectory(grid, params, which, data, times)
        trajectories[which.value] = traj
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            rates = predicted_linear_rates(params, which)
        for w in caught:
            warnings.warn(w.message, stacklevel=2)
        for quantity in rates["quantity"].values:
            row = rates.sel(quantity=quantity)
            var = _measured_variable(str(quantity))
            if var not in traj or not bool(row["admissible"]):
                continue
            fits.append(
                fit_slope(
                    times,
                    traj[var].values,
                    window,
                    float(row["predicted_exponent"]),
                    quantity=f"{which.value}:{quantity}",
                    tolerance=config.tolerance,
                )
            )
    return LinearDecayResult(fits, trajectories, t_wrap)


@dataclass
class NonlinearDecayResult:
    fits: List[SlopeFit]
    trajectory: xr.Dataset
    linear: Dict[str, xr.Dataset]
    close_to_linear: bool
    t_wrap: float

    @property
    def passed(self) -> bool:
        return self.close_to_linear and all(f.passed for f in self.fits)


_LINEAR_COMPARISON = {
    Equation.VISCO: ("l2_u", "hsigma_u", "l2_ut"),
    Equation.FRICTION: ("l2_v", "hsigma_v", "l2_vt"),
}


def run_nonlinear_decay(config: ExperimentConfig) -> NonlinearDecayResult:
    """
    Decay-rate fits of a small-data solution of the coupled system.

    Parameters
    ----------
    config : ExperimentConfig
        Settings; the exponents must lie in the global-existence region.

    Returns
    -------
    NonlinearDecayResult
        Fits of the seven solution norms against their predicted exponents
        and the comparison with the linear evolution of the same data.
    """
    grid, params = config.require_grid(), config.params
    verdict = classify(params).verdict
    if verdict is not Verdict.GLOBAL_EXISTENCE:
        raise ConfigError(f"{params!r} is classified as {verdict.value}, not global existence.")
    table = decay_rate_table(params)

    state = _data(config)
    u1, v1 = to_physical(state.u_t), to_physical(state.v_t)
    t_wrap = min(wraparound_time(grid, params, u1), wraparound_time(grid, params, v1))
    window = _check_window(config, t_wrap)
    t_end = max(window[1], float(config.t_end or window[1]))
    times = _sample_times(t_end, config.samples)

    controls = dataclasses.replace(config.controls, nonlinear=True)
    trajectory, _ = DuhamelIntegrator(grid, params, controls).integrate(state, t_end, times[1:])
    if trajectory.attrs["status"] != "ok":
        raise ExperimentAborted(
            f"Blow-up suspected at t={trajectory.attrs['t_detect']:.4g} for epsilon="
            f"{config.epsilon}; the data may be too large for the small-data regime."
        )

    fits = [
        fit_slope(
            trajectory["time"].values,
            trajectory[q].values,
            window,
            rate,
            quantity=q,
            tolerance=config.tolerance,
        )
        for q, rate in table.rates.items()
    ]

    t = trajectory["time"].values
    linear = {
        Equation.VISCO.value: linear_trajectory(grid, params, Equation.VISCO, u1, t),
        Equation.FRICTION.value: linear_trajectory(grid, params, Equation.FRICTION, v1, t),
    }
    close = True
    for which, names in _LINEAR_COMPARISON.items():
        lin = linear[which.value]
        for name in names:
            a, b = trajectory[name].values, lin[name].values
            ok = (a > 0) & (b > 0)
            ratio = a[ok] / b[ok]
            close &= bool(np.all((ratio <= LINEAR_CLOSENESS) & (ratio >= 1.0 / LINEAR_CLOSENESS)))
    return NonlinearDecayResult(fits, trajectory, linear, close, t_wrap)


@dataclass(frozen=True)
class LifespanRecord:
    """
    Detected lifespan for one data size.

    ``t_detect`` is None for censored runs. ``outcome`` is ``"detected"``,
    ``"censored"`` (no blow-up before t_max) or ``"budget"`` (the step
    budget ran out first).
    """

    epsilon: float
    t_detect: Optional[float]
    dt_at_detection: float
    refinement_level: int
    norms_at_detection: Optional[Tuple[NormReport, NormReport]]
    refined_t_detect: Optional[float] = None
    refinement_ok: bool = True
    outcome: str = "detected"

    @property
    def censored(self) -> bool:
        return self.t_detect is None


@dataclass
class LifespanResult:
    records: List[LifespanRecord]
    fit: Optional[SlopeFit]
    predicted: float
    monotone: bool

    @property
    def refinement_ok(self) -> bool:
        return all(r.refinement_ok for r in self.records)

    @property
    def passed(self) -> bool:
        return self.fit is not None and self.fit.passed and self.monotone and self.refinement_ok


def records_to_dataset(records: Sequence[LifespanRecord]) -> xr.Dataset:
    """Tabulate lifespan records by data size."""
    nan = float("nan")

    def value(x):
        return nan if x is None else float(x)

    ds = xr.Dataset(
        {
            "t_detect": ("epsilon", np.array([value(r.t_detect) for r in records])),
            "dt_at_detection": ("epsilon", np.array([r.dt_at_detection for r in records])),
            "refinement_level": ("epsilon", np.array([r.refinement_level for r in records])),
            "refined_t_detect": ("epsilon", np.array([value(r.refined_t_detect) for r in records])),
            "refinement_ok": ("epsilon", np.array([r.refinement_ok for r in records])),
            "censored": ("epsilon", np.array([r.censored for r in records])),
            "outcome": ("epsilon", np.array([r.outcome for r in records])),
            "linf_u": (
                "epsilon",
                np.array([nan if r.norms_at_detection is None else r.norms_at_detection[0].linf for r in records]),
            ),
            "linf_v": (
                "epsilon",
                np.array([nan if r.norms_at_detection is None else r.norms_at_detection[1].linf for r in records]),
            ),
        },
        coords={"epsilon": np.array([r.epsilon for r in records])},
    )
    return ds


def _lifespan_jobs(config: ExperimentConfig, epsilons: Sequence[float], refine: bool) -> List[dict]:
    grid, controls = config.require_grid(), config.controls
    if refine and config.lifespan.refinement == "grid":
        grid = Grid(grid.dim, 2 * grid.points_per_axis, grid.half_width)
    elif refine:
        controls = dataclasses.replace(
            controls, dt0=controls.dt0 / 2, dt_max=controls.dt_max / 2,
            dt_min=min(controls.dt_min, controls.dt0 / 2),
        )
    controls = dataclasses.replace(controls, nonlinear=True, store_fields=False)
    return [
        {
            "epsilon": float(eps),
            "grid": grid,
            "params": config.params,
            "controls": controls,
            "t_max": config.lifespan.t_max,
            "n_samples": config.lifespan.samples,
            "width": config.width,
            "shape": config.shape,
            "seed": config.seed,
        }
        for eps in epsilons
    ]


def _finite_or_none(value: float) -> Optional[float]:
    return float(value) if np.isfinite(value) else None


def run_lifespan_sweep(config: ExperimentConfig, client: Any = None) -> LifespanResult:
    """
    Detect the lifespan for each data size and fit its scaling exponent.

    Parameters
    ----------
    config : ExperimentConfig
        Settings with a decreasing ``epsilons`` list spanning a decade.
    client : dask.distributed.Client, optional
        Run the jobs on an existing client.

    Returns
    -------
    LifespanResult
        Records sorted by epsilon, the log T vs log epsilon fit (None when
        fewer than five uncensored records remain) and the monotonicity flag.
        Every uncensored record is re-run once at the next refinement level.
    """
    params = config.params
    predicted = lifespan_exponent(params)
    if predicted is None:
        raise ConfigError(f"{params!r} is not on the blow-up side with Gamma_c > 0.")
    eps = np.asarray(config.epsilons, dtype=float)
    if eps.size < 2 or eps.max() / eps.min() < 10.0:
        raise ConfigError(f"epsilons must span at least one decade, got {config.epsilons}.")

    base = run_tasks(_lifespan_task, _lifespan_jobs(config, eps, False), config.workers, client)
    refined_eps = [e for e, s in zip(sorted(eps), base) if np.isfinite(s["t_detect"])]
    refined = run_tasks(_lifespan_task, _lifespan_jobs(config, refined_eps, True), config.workers, client)
    refined_by_eps = dict(zip(refined_eps, refined))

    records = []
    for e, s in zip(sorted(eps), base):
        t_detect = _finite_or_none(s["t_detect"])
        if t_detect is None:
            if s.get("stop_reason") == "max_steps":
                outcome = "budget"
                warnings.warn(
                    f"Step budget exhausted for epsilon={e} at t={s['time']:.4g}; record censored as budget.",
                    stacklevel=2,
                )
            else:
                outcome = "censored"
                warnings.warn(
                    f"No blow-up detected for epsilon={e} before t={config.lifespan.t_max}; record censored.",
                    stacklevel=2,
                )
            records.append(
                LifespanRecord(float(e), None, s["dt_at_detection"], 0, s["norms"], outcome=outcome)
            )
            continue
        t_fine = _finite_or_none(refined_by_eps[e]["t_detect"])
        ok = t_fine is not None and abs(t_fine - t_detect) <= config.lifespan.refinement_tol * t_detect
        if not ok:
            warnings.warn(
                f"Lifespan for epsilon={e} moved from {t_detect:.4g} to {t_fine} under refinement.",
                stacklevel=2,
            )
        records.append(
            LifespanRecord(float(e), t_detect, s["dt_at_detection"], 1, s["norms"], t_fine, bool(ok))
        )

    valid = [r for r in records if not r.censored]
    times = np.array([r.t_detect for r in valid])
    monotone = bool(np.all(np.diff(times) <= 1e-12 * np.maximum(times[:-1], 1.0))) if times.size > 1 else True
    if not monotone:
        warnings.warn("Detected lifespans are not nonincreasing in epsilon.", stacklevel=2)

    fit = None
    if len(valid) >= MIN_FIT_SAMPLES:
        e_valid = np.array([r.epsilon for r in valid])
        fit = fit_slope(
            e_valid,
            times,
            (e_valid.min(), e_valid.max()),
            predicted,
            quantity="lifespan",
            tolerance=config.lifespan.slope_tol,
            shift=0.0,
            acceptance="relative",
        )
    else:
        warnings.warn(
            f"Only {len(valid)} uncensored lifespans; a scaling fit needs {MIN_FIT_SAMPLES}.",
            stacklevel=2,
        )
    return LifespanResult(records, fit, predicted, monotone)


def run_region_map(config: ExperimentConfig) -> RegionMap:
    """
    Region map of the (p, q) plane for one of the two dimension regimes.

    Parameters
    ----------
    config : ExperimentConfig
        Supplies sigma, n and the sampled ranges.

    Returns
    -------
    RegionMap
    """
    sigma, n = config.params.sigma, config.params.dim
    if region_regime(sigma, n) is None:
        raise ConfigError(
            f"(sigma, n) = ({sigma}, {n}) is in neither regime: need 4 sigma/3 < n < 2 sigma "
            f"({4 * sigma / 3:.4g} < n < {2 * sigma:.4g}) or sigma < n <= 4 sigma/3."
        )
    s = config.region
    return emit_region_map(
        config.params,
        p_range=(s.p_min, s.p_max),
        q_range=(s.q_min, s.q_max),
        num=s.num,
        chunks=s.chunks,
    )


def region_map_crossing_error(region_map: RegionMap) -> float:
    """Gap between the two curve traces at p_crit (inf when either misses it)."""
    constants = region_map.constants["value"]
    p_crit = float(constants.sel(name="p_crit"))
    curves = region_map.curves
    at = np.isclose(curves["p"].values, p_crit, rtol=0, atol=1e-12)
    qs = {}
    for cid in ("curve1", "curve2"):
        sel = at & (curves["curve_id"].values == cid)
        if not sel.any():
            return float("inf")
        qs[cid] = float(curves["q"].values[sel][0])
    return abs(qs["curve1"] - qs["curve2"])


@dataclass
class TestfnResult:
    __test__ = False

    certificates: Dict[float, float]
    trajectory: xr.Dataset
    functionals: List[Any]
    keystone: Optional[xr.Dataset]
    laplacian_bound: DecayCertificate
    scaling: xr.Dataset
    residual: Optional[WeakResidual]
    monotone: bool
    ordered: bool

    @property
    def passed(self) -> bool:
        keystone_ok = self.keystone is None or bool(self.keystone.attrs["passed"])
        return bool(
            self.monotone
            and self.ordered
            and self.laplacian_bound.converged
            and float(self.scaling["relative_error"].max()) <= SCALING_TOL
            and keystone_ok
        )


def _functional_checks(values: Sequence[Any]) -> Tuple[bool, bool]:
    names = ("I1", "I2", "J1", "J2", "I_R", "J_R")
    table = np.array([[getattr(v, k) for k in names] for v in values])
    tol = 1e-12 * np.maximum(np.abs(table[:-1]), 1.0)
    monotone = bool(np.all(np.diff(table, axis=0) >= -tol))
    ordered = all(v.I1 <= v.I2 * (1 + 1e-12) and v.J1 <= v.J2 * (1 + 1e-12) for v in values)
    return monotone, ordered


def run_testfn(config: ExperimentConfig, client: Any = None) -> TestfnResult:
    """
    Test-function checks on a simulated trajectory.

    Builds the certified time cutoff, integrates the system with field
    snapshots up to the largest R^(2 sigma), evaluates the functionals over
    the R sweep, fits the keystone inequalities, certifies the decay of
    (-Delta)^sigma phi, checks the scaling identity of the fractional
    Laplacian and evaluates the weak-solution residual at the smallest R.
    """
    grid, params = config.require_grid(), config.params
    settings = config.testfn
    eta, certificates = build_eta(settings.regularity, (params.p, params.q))
    tfs = TestFunctionSet(params.sigma_bar, eta)

    t_end = max(settings.radii) ** (2.0 * params.sigma)
    times = np.linspace(0.0, t_end, settings.samples + 1)[1:]
    controls = dataclasses.replace(config.controls, store_fields=True)
    trajectory, _ = DuhamelIntegrator(grid, params, controls).integrate(_data(config), t_end, times)

    radii = sweep_radii(trajectory, params.sigma, settings.radii)
    if not radii:
        raise ExperimentAborted(
            f"Trajectory ended at t={float(trajectory['time'][-1]):.4g}, before any R^(2 sigma)."
        )
    jobs = [{"trajectory": trajectory, "tfs": tfs.replace(R=R), "params": params} for R in radii]
    values = run_tasks(_functional_task, jobs, config.workers, client, scheduler="threads")
    monotone, ordered = _functional_checks(values)

    keystone = None
    if len(values) >= 4:
        keystone = check_keystone_inequalities(values, params)
    else:
        warnings.warn(f"Only {len(values)} radii fit the trajectory; keystone check skipped.", stacklevel=2)

    _, laplacian_bound = frac_laplacian_phi(
        lambda g: phi_profile(g.radius, g.dim, params.sigma_bar), grid, params.sigma, params.sigma_bar
    )
    errors = np.array(
        [[scaling_identity_error(s, R, grid, params.sigma_bar) for R in SCALING_RADII] for s in SCALING_POWERS]
    )
    scaling = xr.Dataset(
        {"relative_error": (("s", "R"), errors)},
        coords={"s": list(SCALING_POWERS), "R": list(SCALING_RADII)},
    )
    residual = weak_residual(trajectory, tfs.replace(R=radii[0]), params)
    return TestfnResult(
        certificates, trajectory, values, keystone, laplacian_bound, scaling, residual, monotone, ordered
    )


def simulate(config: ExperimentConfig) -> xr.Dataset:
    """Integrate the coupled system and return the sampled trajectory."""
    grid, params = config.require_grid(), config.params
    t_end = float(config.t_end or config.t_hi or 100.0)
    times = np.linspace(0.0, t_end, config.samples + 1)[1:]
    trajectory, _ = DuhamelIntegrator(grid, params, config.controls).integrate(_data(config), t_end, times)
    return trajectory


def build_manifest(
    config: ExperimentConfig,
    command: str,
    wall_time: float,
    acceptance: Dict[str, Any],
    extra: Optional[Dict[str, Any]] = None,
) -> dict:
    """Run manifest: config echo, version, wall time, tolerances and gates."""
    manifest = {
        "command": command,
        "version": package_version(),
        "config": config.to_dict(),
        "wall_time_s": round(float(wall_time), 3),
        "seed": config.seed,
        "tolerances": {
            "decay_slope": config.tolerance,
            "lifespan_slope_relative": config.lifespan.slope_tol,
            "lifespan_refinement": config.lifespan.refinement_tol,
            "wrap_fraction": WRAP_FRACTION,
            "wrap_band_energy": BAND_ENERGY_TOL,
            "scaling_identity": SCALING_TOL,
        },
        "acceptance": acceptance,
    }
    if extra:
        manifest.update(extra)
    return manifest


def write_outputs(
    out_dir: Union[str, os.PathLike],
    tables: Dict[str, Tuple[xr.Dataset, Optional[Sequence[str]]]],
    manifest: dict,
) -> List[str]:
    """
    Write CSV tables and the manifest into ``out_dir``.

    Parameters
    ----------
    out_dir : str or path-like
        Created when missing.
    tables : dict
        ``{name: (dataset, columns or None)}``; written as ``name.csv``.
    manifest : dict
        Written as ``manifest.json``.

    Returns
    -------
    list of str
        Paths written.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = [
        dataset_to_csv(ds, os.path.join(out_dir, f"{name}.csv"), columns=columns)
        for name, (ds, columns) in sorted(tables.items())
    ]
    paths.append(write_manifest(os.path.join(out_dir, "manifest.json"), manifest))
    return paths


class Timer:
    """Wall-clock context manager for manifests."""

    def __enter__(self) -> "Timer":
        self.start = time.perf_counter()
        self.elapsed = 0.0
        return self

    def __exit__(self, *exc: Any) -> None:
        self.elapsed = time.perf_counter() - self.start


__all__ = [
    "ExperimentAborted",
    "ExperimentConfig",
    "LifespanSettings",
    "RegionSettings",
    "TestfnSettings",
    "SlopeFit",
    "LifespanRecord",
    "LifespanResult",
    "LinearDecayResult",
    "NonlinearDecayResult",
    "TestfnResult",
    "load_config",
    "fit_slope",
    "fits_to_dataset",
    "records_to_dataset",
    "wraparound_time",
    "linear_trajectory",
    "run_linear_decay",
    "run_nonlinear_decay",
    "run_lifespan_sweep",
    "run_region_map",
    "region_map_crossing_error",
    "run_testfn",
    "simulate",
    "build_manifest",
    "write_outputs",
    "REPORT_COLUMNS",
]
