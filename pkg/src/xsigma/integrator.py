from __future__ import annotations

import warnings
from collections import OrderedDict
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.fft
import xarray as xr

from xsigma.core import (
    NormReport,
    SpectralField,
    norms,
    spectral_filter,
    to_physical,
    to_spectral,
)
from xsigma.grid import Grid
from xsigma.params import ModelParams
from xsigma.propagators import Equation, ModePropagator, grid_propagator
from xsigma.utils import dataset_to_csv, update_history

_CACHE_SIZE = 64
_BISECTION_STEPS = 30

TRAJECTORY_COLUMNS = (
    "t",
    "l1_u",
    "l2_u",
    "lq_u",
    "linf_u",
    "hsigma_u",
    "l2_ut",
    "l2_v",
    "hsigma_v",
    "l2_vt",
    "dt",
    "status",
)


class Status(str, Enum):
    OK = "ok"
    BLOWUP_SUSPECTED = "blowup_suspected"
    NON_FINITE = "non_finite"


@dataclass(frozen=True)
class SystemState:
    """
    State (u, u_t, v, v_t) of the coupled system at time t.

    Parameters
    ----------
    t : float
        Time.
    u, u_t, v, v_t : SpectralField
        Components, all on one grid.
    params : ModelParams
        Exponents of the system.
    """

    t: float
    u: SpectralField
    u_t: SpectralField
    v: SpectralField
    v_t: SpectralField
    params: ModelParams

    def __post_init__(self) -> None:
        if self.t < 0:
            raise ValueError(f"State time must be non-negative, got {self.t}.")
        grids = {self.u.grid, self.u_t.grid, self.v.grid, self.v_t.grid}
        if len(grids) != 1:
            raise ValueError("All state components must share one grid.")

    @property
    def grid(self) -> Grid:
        return self.u.grid

    def is_finite(self) -> bool:
        return all(f.is_finite() for f in (self.u, self.u_t, self.v, self.v_t))

    def linf(self) -> Tuple[float, float]:
        return (
            float(np.max(np.abs(to_physical(self.u)))),
            float(np.max(np.abs(to_physical(self.v)))),
        )


@dataclass(frozen=True)
class StepReport:
    dt_used: float
    max_abs_u: float
    max_abs_v: float
    status: Status = Status.OK


@dataclass
class IntegratorControls:
    """
    Tolerances and switches of the time integration.

    Parameters
    ----------
    dt0 : float, default 0.01
        Initial step.
    dt_min : float, default 1e-10
        Steps below this end the run as a suspected blow-up.
    dt_max : float, default 0.5
        Upper bound of adaptive steps.
    order : int, default 2
        1 for exponential Euler, 2 for the predictor-corrector variant.
    use_filter : bool, default True
        Apply the exponential spectral filter to the nonlinearity.
    adaptive : bool, default True
        Halve/double dt from the relative change of the L^inf monitor.
    shrink_tol, grow_tol : float
        Relative monitor change above which dt is halved / below which it is doubled.
    blowup_factor : float, default 1e6
        Monitor growth, relative to the data size, that signals blow-up.
    nonlinear : bool, default True
        Disable to integrate the linear problems only.
    store_fields : bool, default False
        Keep physical snapshots of u and v at the sample times.
    max_steps : int, default 2_000_000
        Safety cap on accepted plus rejected steps.
    """

    dt0: float = 0.01
    dt_min: float = 1e-10
    dt_max: float = 0.5
    order: int = 2
    use_filter: bool = True
    adaptive: bool = True
    shrink_tol: float = 0.2
    grow_tol: float = 0.01
    blowup_factor: float = 1e6
    nonlinear: bool = True
    store_fields: bool = False
    max_steps: int = 2_000_000

    def __post_init__(self) -> None:
        if self.order not in (1, 2):
            raise ValueError(f"order must be 1 or 2, got {self.order}.")
        if not 0 < self.dt_min <= self.dt0 <= self.dt_max:
            raise ValueError(
                f"Need 0 < dt_min <= dt0 <= dt_max, got {self.dt_min}, {self.dt0}, {self.dt_max}."
            )
        if not self.blowup_factor > 1:
            raise ValueError(f"blowup_factor must exceed 1, got {self.blowup_factor}.")
        if not 0 < self.grow_tol < self.shrink_tol:
            raise ValueError("Need 0 < grow_tol < shrink_tol.")

    def to_dict(self) -> dict:
        return asdict(self)


def initial_state(
    grid: Grid,
    params: ModelParams,
    epsilon: float,
    width: float = 1.0,
    shape: str = "gaussian",
    seed: Optional[int] = None,
    n_bumps: int = 3,
) -> SystemState:
    """
    Initial state (0, eps u1, 0, eps v1) with positive data of unit peak scale.

    Parameters
    ----------
    grid : Grid
        The grid.
    params : ModelParams
        Exponents.
    epsilon : float
        Data size.
    width : float, default 1.0
        Gaussian width w in exp(-|x|^2 / w^2).
    shape : {"gaussian", "bumps"}
        ``"bumps"`` sums ``n_bumps`` positive Gaussians with random centers
        and widths drawn from ``seed``.
    seed : int, optional
        Seed for the ``"bumps"`` family.

    Returns
    -------
    SystemState
        State at t = 0.
    """
    r2 = grid.radius**2
    if shape == "gaussian":
        profile = np.exp(-r2 / width**2)
        u1 = v1 = profile
    elif shape == "bumps":
        rng = np.random.default_rng(seed)
        u1 = _random_bumps(grid, width, n_bumps, rng)
        v1 = _random_bumps(grid, width, n_bumps, rng)
    else:
        raise ValueError(f"Unknown initial-data shape '{shape}'.")

    edge = max(_boundary_ratio(grid, u1), _boundary_ratio(grid, v1))
    if edge > 1e-12:
        warnings.warn(
            f"Initial data reaches {edge:.2e} of its peak at the box boundary; "
            "increase half_width.",
            stacklevel=2,
        )
    zero = SpectralField.zeros(grid)
    return SystemState(
        0.0,
        zero,
        to_spectral(epsilon * u1, grid),
        zero,
        to_spectral(epsilon * v1, grid),
        params,
    )


def _random_bumps(
    grid: Grid, width: float, n_bumps: int, rng: np.random.Generator
) -> np.ndarray:
    out = np.zeros(grid.shape)
    for _ in range(n_bumps):
        center = rng.uniform(-width, width, size=grid.dim)
        w = width * rng.uniform(0.5, 1.0)
        amp = rng.uniform(0.5, 1.0)
        r2 = sum((x - c) ** 2 for x, c in zip(grid.positions, center))
        out += amp * np.exp(-r2 / w**2)
    return out / np.max(out)


def _boundary_ratio(grid: Grid, values: np.ndarray) -> float:
    peak = np.max(np.abs(values))
    if peak == 0:
        return 0.0
    edge = 0.0
    for axis in range(grid.dim):
        edge = max(edge, float(np.max(np.abs(np.take(values, 0, axis=axis)))))
    return edge / peak


def _power_coefficients(
    values: np.ndarray, exponent: float, grid: Grid, use_filter: bool
) -> np.ndarray:
    """Coefficients of |w|^exponent; non-finite samples give NaN coefficients."""
    powered = np.abs(values) ** exponent
    if not np.all(np.isfinite(powered)):
        return np.full(grid.shape, np.nan + 0j)
    coeffs = scipy.fft.fftn(powered, norm="forward") * grid.phase
    if use_filter:
        coeffs = coeffs * spectral_filter(grid)
    return coeffs


def nonlinearity(
    state: SystemState, use_filter: bool = True
) -> Tuple[SpectralField, SpectralField]:
    """
    Right-hand sides |v|^p (first equation) and |u|^q (second equation).

    Powers are taken pointwise in physical space and the results are
    passed through the exponential spectral filter.

    Parameters
    ----------
    state : SystemState
        Current state.
    use_filter : bool, default True
        Apply the spectral filter.

    Returns
    -------
    tuple of SpectralField
        (F|v|^p, F|u|^q). Non-finite input yields NaN coefficients.
    """
    grid, params = state.grid, state.params
    v_vals = to_physical(state.v)
    u_vals = to_physical(state.u)
    return (
        SpectralField(grid, _power_coefficients(v_vals, params.p, grid, use_filter)),
        SpectralField(grid, _power_coefficients(u_vals, params.q, grid, use_filter)),
    )


def _propagate(
    prop: ModePropagator,
    pos: np.ndarray,
    vel: np.ndarray,
    forcing: Optional[np.ndarray],
) -> Tuple[np.ndarray, np.ndarray]:
    P = prop.entries
    new_pos = P[..., 0, 0] * pos + P[..., 0, 1] * vel
    new_vel = P[..., 1, 0] * pos + P[..., 1, 1] * vel
    if forcing is not None:
        h = prop.t
        new_pos = new_pos + h * prop.phi1[..., 0, 1] * forcing
        new_vel = new_vel + h * prop.phi1[..., 1, 1] * forcing
    return new_pos, new_vel


def _correct(
    prop: ModePropagator, pos: np.ndarray, vel: np.ndarray, delta: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    h = prop.t
    return (
        pos + h * prop.phi2[..., 0, 1] * delta,
        vel + h * prop.phi2[..., 1, 1] * delta,
    )


class DuhamelIntegrator:
    """
    Exponential integrator for the coupled system with exact linear part.

    The linear propagators of both equations are cached per step length.

    Parameters
    ----------
    grid : Grid
        The grid.
    params : ModelParams
        Exponents.
    controls : IntegratorControls, optional
        Tolerances and switches.
    """

    def __init__(
        self,
        grid: Grid,
        params: ModelParams,
        controls: Optional[IntegratorControls] = None,
    ) -> None:
        if grid.dim != params.spatial_dim:
            raise ValueError(
                f"Grid dimension {grid.dim} does not match params.dim={params.dim}."
            )
        self.grid = grid
        self.params = params
        self.controls = controls or IntegratorControls()
        self._cache: "OrderedDict[float, Tuple[ModePropagator, ModePropagator]]" = (
            OrderedDict()
        )
        self.last_state: Optional[SystemState] = None

    def propagators(self, dt: float) -> Tuple[ModePropagator, ModePropagator]:
        """(visco, friction) propagators for step ``dt``."""
        key = float(dt)
        if key in self._cache:
            self._cache.move_to_end(key)
            return self._cache[key]
        pair = (
            grid_propagator(self.grid, self.params, Equation.VISCO, key),
            grid_propagator(self.grid, self.params, Equation.FRICTION, key),
        )
        self._cache[key] = pair
        if len(self._cache) > _CACHE_SIZE:
            self._cache.popitem(last=False)
        return pair

    def step(self, state: SystemState, dt: float) -> Tuple[SystemState, StepReport]:
        """
        Advance the state by one exponential-integrator step.

        Parameters
        ----------
        state : SystemState
            Current state, finite.
        dt : float
            Step length, dt > 0.

        Returns
        -------
        tuple
            The new state and its StepReport. On non-finite output the input
            state is returned unchanged with status NON_FINITE.
        """
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}.")
        ctl = self.controls
        visco, friction = self.propagators(dt)

        if ctl.nonlinear:
            n_u, n_v = nonlinearity(state, ctl.use_filter)
            force_u, force_v = n_u.coefficients, n_v.coefficients
        else:
            force_u = force_v = None

        u, ut = _propagate(visco, state.u.coefficients, state.u_t.coefficients, force_u)
        v, vt = _propagate(friction, state.v.coefficients, state.v_t.coefficients, force_v)

        if ctl.nonlinear and ctl.order == 2:
            predicted = self._pack(state, dt, u, ut, v, vt)
            if predicted.is_finite():
                p_u, p_v = nonlinearity(predicted, ctl.use_filter)
                u, ut = _correct(visco, u, ut, p_u.coefficients - force_u)
                v, vt = _correct(friction, v, vt, p_v.coefficients - force_v)

        new = self._pack(state, dt, u, ut, v, vt)
        if not new.is_finite():
            return state, StepReport(dt, np.inf, np.inf, Status.NON_FINITE)
        max_u, max_v = new.linf()
        return new, StepReport(dt, max_u, max_v, Status.OK)

    @staticmethod
    def _pack(state, dt, u, ut, v, vt) -> SystemState:
        grid = state.grid
        return SystemState(
            state.t + dt,
            SpectralField(grid, u),
            SpectralField(grid, ut),
            SpectralField(grid, v),
            SpectralField(grid, vt),
            state.params,
        )

    def advance_to(self, state: SystemState, t_target: float, dt: float) -> SystemState:
        """Fixed-step advance used for bisection refinement."""
        while state.t < t_target:
            h = min(dt, t_target - state.t)
            new, report = self.step(state, h)
            if report.status is Status.NON_FINITE:
                return new
            state = new
        return state

    def integrate(
        self,
        initial: SystemState,
        t_end: float,
        sample_times: Optional[Sequence[float]] = None,
    ) -> Tuple[xr.Dataset, StepReport]:
        """
        Integrate to ``t_end`` and sample norms.

        Parameters
        ----------
        initial : SystemState
            Starting state.
        t_end : float
            Final time, greater than ``initial.t``.
        sample_times : sequence of float, optional
            Output times in (initial.t, t_end]; defaults to 100 equal steps.

        Returns
        -------
        tuple
            The trajectory dataset and the last StepReport. Runs that trip the
            blow-up predicate stop early with status BLOWUP_SUSPECTED and
            record ``t_detect`` in the dataset attributes.
        """
        if not t_end > initial.t:
            raise ValueError(f"t_end={t_end} must exceed the initial time {initial.t}.")
        ctl = self.controls
        if sample_times is None:
            samples = np.linspace(initial.t, t_end, 101)[1:]
        else:
            samples = np.unique(np.asarray(sample_times, dtype=float))
            samples = samples[(samples > initial.t) & (samples <= t_end)]
            if samples.size == 0 or samples[-1] < t_end:
                samples = np.append(samples, t_end)

        ut_inf = float(np.max(np.abs(to_physical(initial.u_t))))
        vt_inf = float(np.max(np.abs(to_physical(initial.v_t))))
        linf_u, linf_v = initial.linf()
        reference = max(ut_inf + vt_inf, linf_u + linf_v)
        if reference == 0:
            reference = 1.0

        recorder = _TrajectoryRecorder(initial, ctl.store_fields)
        recorder.add(initial, ctl.dt0, Status.OK)

        state = initial
        dt = ctl.dt0
        monitor_old = linf_u + linf_v
        report = StepReport(dt, linf_u, linf_v, Status.OK)
        stop_reason = ""
        previous = state
        steps = 0

        for target in samples:
            while state.t < target - 1e-12 * max(1.0, target):
                steps += 1
                if steps > ctl.max_steps:
                    stop_reason = "max_steps"
                    warnings.warn(
                        f"Step budget of {ctl.max_steps} exhausted at t={state.t:.6g}.",
                        stacklevel=2,
                    )
                    break
                h = min(dt, target - state.t)
                new, step_report = self.step(state, h)

                if step_report.status is Status.NON_FINITE:
                    if ctl.adaptive and h / 2 >= ctl.dt_min:
                        dt = h / 2
                        continue
                    report = step_report
                    stop_reason = "non_finite" if not ctl.adaptive else "dt_underflow"
                    recorder.add_nonfinite(state.t + h, h)
                    break

                monitor_new = step_report.max_abs_u + step_report.max_abs_v
                if ctl.adaptive:
                    change = abs(monitor_new - monitor_old) / max(monitor_old, reference)
                    if change > ctl.shrink_tol:
                        dt = h / 2
                        if dt < ctl.dt_min:
                            report = StepReport(h, monitor_old, 0.0, Status.BLOWUP_SUSPECTED)
                            stop_reason = "dt_underflow"
                            break
                        continue
                    if change < ctl.grow_tol and h == dt:
                        dt = min(2 * dt, ctl.dt_max)

                previous, state = state, new
                monitor_old = monitor_new
                report = step_report
                if monitor_new > ctl.blowup_factor * reference:
                    stop_reason = "threshold"
                    break

            if stop_reason:
                break
            recorder.add(state, report.dt_used, report.status)

        t_detect = None
        status = Status.OK
        if stop_reason in ("threshold", "dt_underflow", "non_finite"):
            if stop_reason == "threshold":
                recorder.add(state, report.dt_used, Status.BLOWUP_SUSPECTED)
                refine = _Refiner(self, previous, dt, reference)
            else:
                refine = None
            status = Status.BLOWUP_SUSPECTED
            if stop_reason == "non_finite" and not ctl.adaptive:
                status = Status.NON_FINITE
            report = StepReport(report.dt_used, report.max_abs_u, report.max_abs_v, status)

        ds = recorder.to_dataset(self.grid, self.params, ctl, reference)
        ds.attrs["stop_reason"] = stop_reason or "completed"
        ds.attrs["status"] = status.value
        if stop_reason == "dt_underflow":
            t_detect = float(state.t)
        elif status is not Status.OK:
            t_detect = detect_blowup(ds, ctl, refine=refine)
        ds.attrs["t_detect"] = np.nan if t_detect is None else float(t_detect)
        ds.attrs["final_dt"] = float(dt)
        self.last_state = state
        update_history(
            ds,
            f"Integrated {self.params!r} to t={float(state.t):.6g} "
            f"(order {ctl.order}, {steps} steps, {ds.attrs['stop_reason']}).",
        )
        return ds, report


class _Refiner:
    """Monitor value at time t, re-integrated from the last state below threshold."""

    def __init__(self, integrator: DuhamelIntegrator, start: SystemState, dt: float, reference: float):
        self.integrator = integrator
        self.start = start
        self.dt = dt
        self.reference = reference

    def __call__(self, t: float) -> float:
        state = self.integrator.advance_to(self.start, t, self.dt)
        if not state.is_finite():
            return np.inf
        lu, lv = state.linf()
        return (lu + lv) / self.reference


class _TrajectoryRecorder:
    def __init__(self, initial: SystemState, store_fields: bool):
        self.params = initial.params
        self.store_fields = store_fields
        self.rows: list = []
        self.u_snaps: list = []
        self.v_snaps: list = []
        self.u1 = to_physical(initial.u_t)
        self.v1 = to_physical(initial.v_t)

    def add(self, state: SystemState, dt: float, status: Status) -> None:
        nu = norms(state.u, self.params, state.t)
        nv = norms(state.v, self.params, state.t)
        l2_ut = norms(state.u_t, self.params, state.t).l2
        l2_vt = norms(state.v_t, self.params, state.t).l2
        self.rows.append(
            {
                "time": float(state.t),
                "l1_u": nu.l1,
                "l2_u": nu.l2,
                "lq_u": nu.lq,
                "linf_u": nu.linf,
                "hsigma_u": nu.hdot_sigma,
                "l2_ut": l2_ut,
                "l1_v": nv.l1,
                "l2_v": nv.l2,
                "linf_v": nv.linf,
                "hsigma_v": nv.hdot_sigma,
                "l2_vt": l2_vt,
                "dt": float(dt),
                "status": status.value,
            }
        )
        if self.store_fields:
            self.u_snaps.append(to_physical(state.u))
            self.v_snaps.append(to_physical(state.v))

    def add_nonfinite(self, t: float, dt: float) -> None:
        row = {k: np.inf for k in self.rows[-1] if k not in ("time", "dt", "status")}
        row.update(time=float(t), dt=float(dt), status=Status.NON_FINITE.value)
        self.rows.append(row)
        if self.store_fields:
            self.u_snaps.append(np.full_like(self.u1, np.nan))
            self.v_snaps.append(np.full_like(self.v1, np.nan))

    def to_dataset(
        self, grid: Grid, params: ModelParams, ctl: IntegratorControls, reference: float
    ) -> xr.Dataset:
        times = np.array([r["time"] for r in self.rows])
        data_vars = {}
        for key in self.rows[0]:
            if key == "time":
                continue
            values = np.array([r[key] for r in self.rows])
            data_vars[key] = ("time", values)
        data_vars["local_norm_u"] = (
            "time",
            np.array([r["l2_u"] + r["hsigma_u"] + r["l2_ut"] for r in self.rows]),
        )
        data_vars["local_norm_v"] = (
            "time",
            np.array([r["l2_v"] + r["hsigma_v"] + r["l2_vt"] for r in self.rows]),
        )
        ds = xr.Dataset(data_vars, coords=grid.coords().coords)
        ds = ds.assign_coords(time=("time", times, {"axis": "T", "long_name": "time"}))
        if self.store_fields:
            dims = ("time",) + grid.dims
            ds["u"] = (dims, np.stack(self.u_snaps))
            ds["v"] = (dims, np.stack(self.v_snaps))
            ds["u1"] = (grid.dims, self.u1)
            ds["v1"] = (grid.dims, self.v1)
        ds.attrs.update(grid.to_attrs())
        ds.attrs.update({f"param_{k}": float(v) for k, v in params.to_dict().items()})
        ds.attrs.update(
            {f"control_{k}": (int(v) if isinstance(v, bool) else v) for k, v in ctl.to_dict().items()}
        )
        ds.attrs["reference_scale"] = float(reference)
        return ds


def _monitor_series(
    history: Union[xr.Dataset, Sequence[Tuple[NormReport, NormReport]]],
) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(history, xr.Dataset):
        times = history["time"].values.astype(float)
        monitor = (history["linf_u"] + history["linf_v"]).values.astype(float)
        return times, monitor
    times = np.array([ru.time for ru, _ in history], dtype=float)
    monitor = np.array([ru.linf + rv.linf for ru, rv in history], dtype=float)
    return times, monitor


def detect_blowup(
    history: Union[xr.Dataset, Sequence[Tuple[NormReport, NormReport]]],
    controls: Optional[IntegratorControls] = None,
    refine: Optional[Callable[[float], float]] = None,
    reference: Optional[float] = None,
) -> Optional[float]:
    """
    First time the blow-up predicate fires.

    The predicate is ||u||_inf + ||v||_inf > blowup_factor * reference, a
    non-finite sample, or (for trajectory datasets) a run stopped by step
    size underflow.

    Parameters
    ----------
    history : xr.Dataset or sequence of (NormReport, NormReport)
        Trajectory dataset or (u, v) norm report pairs in time order.
    controls : IntegratorControls, optional
        Supplies ``blowup_factor``.
    refine : callable, optional
        Maps a time to the monitor divided by the reference; used for
        bisection inside the bracketing samples. Without it the crossing is
        interpolated linearly in log(monitor).
    reference : float, optional
        Data size; defaults to the dataset's ``reference_scale`` or the first
        positive monitor value.

    Returns
    -------
    float or None
        Detected time, or None when no criterion fires.
    """
    controls = controls or IntegratorControls()
    times, monitor = _monitor_series(history)
    if times.size == 0:
        raise ValueError("History is empty.")

    if reference is None and isinstance(history, xr.Dataset):
        reference = history.attrs.get("reference_scale")
    if reference is None:
        positive = monitor[np.isfinite(monitor) & (monitor > 0)]
        reference = float(positive[0]) if positive.size else 1.0

    threshold = controls.blowup_factor * reference
    fired = ~np.isfinite(monitor) | (monitor > threshold)
    if not np.any(fired):
        if isinstance(history, xr.Dataset) and history.attrs.get("stop_reason") == "dt_underflow":
            return float(times[-1])
        return None

    i = int(np.argmax(fired))
    if i == 0:
        return float(times[0])
    t_lo, t_hi = float(times[i - 1]), float(times[i])

    if refine is not None:
        level = controls.blowup_factor
        for _ in range(_BISECTION_STEPS):
            mid = 0.5 * (t_lo + t_hi)
            value = refine(mid)
            if not np.isfinite(value) or value > level:
                t_hi = mid
            else:
                t_lo = mid
            if t_hi - t_lo < 1e-6 * max(1.0, t_hi):
                break
        return t_hi

    m_lo, m_hi = monitor[i - 1], monitor[i]
    if not np.isfinite(m_hi) or m_lo <= 0:
        return t_hi
    frac = (np.log(threshold) - np.log(m_lo)) / (np.log(m_hi) - np.log(m_lo))
    return t_lo + float(np.clip(frac, 0.0, 1.0)) * (t_hi - t_lo)


def step(
    state: SystemState, dt: float, controls: Optional[IntegratorControls] = None
) -> Tuple[SystemState, StepReport]:
    """One step of :class:`DuhamelIntegrator` on the state's own grid."""
    return DuhamelIntegrator(state.grid, state.params, controls).step(state, dt)


def integrate(
    initial: SystemState,
    t_end: float,
    controls: Optional[IntegratorControls] = None,
    sample_times: Optional[Sequence[float]] = None,
) -> Tuple[xr.Dataset, StepReport]:
    """Integrate with a fresh :class:`DuhamelIntegrator`."""
    integrator = DuhamelIntegrator(initial.grid, initial.params, controls)
    return integrator.integrate(initial, t_end, sample_times)


def trajectory_to_csv(trajectory: xr.Dataset, path) -> str:
    """Write the norm columns of a trajectory as CSV."""
    columns = [c for c in TRAJECTORY_COLUMNS if c != "t"]
    table = trajectory[columns].rename({"time": "t"})
    return dataset_to_csv(table, path, columns=TRAJECTORY_COLUMNS)


__all__ = [
    "Status",
    "SystemState",
    "StepReport",
    "IntegratorControls",
    "DuhamelIntegrator",
    "initial_state",
    "nonlinearity",
    "step",
    "integrate",
    "detect_blowup",
    "trajectory_to_csv",
]
