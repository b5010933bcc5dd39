import numpy as np
import pytest
import xarray as xr

from xsigma.core import NormReport, SpectralField, to_physical, to_spectral
from xsigma.grid import Grid
from xsigma.integrator import (
    TRAJECTORY_COLUMNS,
    DuhamelIntegrator,
    IntegratorControls,
    Status,
    SystemState,
    detect_blowup,
    initial_state,
    integrate,
    nonlinearity,
    step,
    trajectory_to_csv,
)
from xsigma.params import ModelParams
from xsigma.propagators import (
    Equation,
    char_roots_friction,
    char_roots_visco,
    evolve_linear,
    grid_propagator,
    kernel_hat,
)


def _monitor_dataset(times, monitor, reference=1.0):
    monitor = np.asarray(monitor, dtype=float)
    ds = xr.Dataset(
        {"linf_u": ("time", monitor / 2), "linf_v": ("time", monitor / 2)},
        coords={"time": np.asarray(times, dtype=float)},
    )
    ds.attrs["reference_scale"] = reference
    return ds


def test_controls_validation():
    with pytest.raises(ValueError, match="order must be 1 or 2"):
        IntegratorControls(order=3)
    with pytest.raises(ValueError, match="dt_min <= dt0 <= dt_max"):
        IntegratorControls(dt0=1.0, dt_max=0.5)
    with pytest.raises(ValueError, match="blowup_factor"):
        IntegratorControls(blowup_factor=1.0)
    with pytest.raises(ValueError, match="grow_tol"):
        IntegratorControls(grow_tol=0.3, shrink_tol=0.2)


def test_initial_state_layout(grid_1d, params_1d):
    state = initial_state(grid_1d, params_1d, epsilon=0.1)
    assert state.t == 0.0
    np.testing.assert_array_equal(state.u.coefficients, 0.0)
    np.testing.assert_array_equal(state.v.coefficients, 0.0)
    np.testing.assert_allclose(to_physical(state.u_t), 0.1 * np.exp(-grid_1d.radius**2), atol=1e-14)


def test_initial_state_bumps_are_reproducible(grid_2d, params_2d):
    a = initial_state(grid_2d, params_2d, 1.0, shape="bumps", seed=11)
    b = initial_state(grid_2d, params_2d, 1.0, shape="bumps", seed=11)
    np.testing.assert_array_equal(a.u_t.coefficients, b.u_t.coefficients)
    values = to_physical(a.v_t)
    np.testing.assert_allclose(values.max(), 1.0, rtol=1e-12)
    assert values.min() > -1e-12


def test_initial_state_rejects_unknown_shape(grid_1d, params_1d):
    with pytest.raises(ValueError, match="Unknown initial-data shape"):
        initial_state(grid_1d, params_1d, 1.0, shape="square")


def test_initial_state_warns_on_boundary_mass(params_1d):
    with pytest.warns(UserWarning, match="box boundary"):
        initial_state(Grid(1, 16, 2.0), params_1d, 1.0)


def test_state_components_share_grid(params_1d):
    a = SpectralField.zeros(Grid(1, 16, 1.0))
    b = SpectralField.zeros(Grid(1, 16, 2.0))
    with pytest.raises(ValueError, match="share one grid"):
        SystemState(0.0, a, a, b, a, params_1d)


def test_integrator_rejects_dimension_mismatch(grid_2d, params_1d):
    with pytest.raises(ValueError, match="does not match"):
        DuhamelIntegrator(grid_2d, params_1d)


def test_nonlinearity_of_constant_fields(grid_1d):
    """|c|^p of a constant field lives in the zero mode only."""
    params = ModelParams(sigma=1.5, dim=1, p=2.0, q=3.0)
    c = -1.5
    const = to_spectral(np.full(grid_1d.shape, c), grid_1d)
    zero = SpectralField.zeros(grid_1d)
    state = SystemState(0.0, const, zero, const, zero, params)
    n_u, n_v = nonlinearity(state)
    expected_u = np.zeros(grid_1d.shape, dtype=complex)
    expected_u[0] = c**2
    expected_v = np.zeros(grid_1d.shape, dtype=complex)
    expected_v[0] = abs(c) ** 3
    np.testing.assert_allclose(n_u.coefficients, expected_u, atol=1e-13)
    np.testing.assert_allclose(n_v.coefficients, expected_v, atol=1e-13)


def test_zero_data_stays_zero(grid_1d, params_1d):
    state = initial_state(grid_1d, params_1d, epsilon=0.0)
    ds, report = integrate(state, 1.0)
    assert report.status is Status.OK
    for name in ("l2_u", "l2_v", "linf_u", "hsigma_v"):
        np.testing.assert_array_equal(ds[name].values, 0.0)


def test_propagator_cache_reuses_steps(grid_1d, params_1d):
    integrator = DuhamelIntegrator(grid_1d, params_1d)
    assert integrator.propagators(0.1) is integrator.propagators(0.1)
    assert integrator.propagators(0.05) is not integrator.propagators(0.1)


def test_linear_mode_reproduces_exact_evolution(grid_1d, params_1d):
    controls = IntegratorControls(nonlinear=False, adaptive=False, dt0=0.05)
    state = initial_state(grid_1d, params_1d, epsilon=0.7)
    integrator = DuhamelIntegrator(grid_1d, params_1d, controls)
    integrator.integrate(state, 2.0)
    final = integrator.last_state
    assert final.t == pytest.approx(2.0)

    u_exact, ut_exact = evolve_linear(state.u_t, Equation.VISCO, 2.0, params_1d)
    v_exact, _ = evolve_linear(state.v_t, Equation.FRICTION, 2.0, params_1d)
    np.testing.assert_allclose(final.u.coefficients, u_exact.coefficients, atol=1e-12)
    np.testing.assert_allclose(final.u_t.coefficients, ut_exact.coefficients, atol=1e-12)
    np.testing.assert_allclose(final.v.coefficients, v_exact.coefficients, atol=1e-12)


def _fixed_step_solution(grid, params, h, order=2):
    controls = IntegratorControls(adaptive=False, dt0=h, dt_min=min(h, 1e-10), order=order)
    integrator = DuhamelIntegrator(grid, params, controls)
    state = initial_state(grid, params, epsilon=0.5)
    return integrator.advance_to(state, 1.0, h)


def test_second_order_convergence():
    grid = Grid(1, 64, 16.0)
    params = ModelParams(sigma=1.5, dim=1, p=2.0, q=2.0)
    reference = _fixed_step_solution(grid, params, 0.003125)
    errors = []
    for h in (0.1, 0.05, 0.025):
        sol = _fixed_step_solution(grid, params, h)
        diff = np.concatenate(
            [
                sol.u.coefficients - reference.u.coefficients,
                sol.v.coefficients - reference.v.coefficients,
            ]
        )
        errors.append(np.max(np.abs(diff)))
    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all(orders >= 1.7), orders

    euler = _fixed_step_solution(grid, params, 0.05, order=1)
    euler_err = np.max(np.abs(euler.u.coefficients - reference.u.coefficients))
    assert euler_err > errors[1]


def _forced_mode_integral(roots, h):
    """int_0^h K(s) ds for K(s) = (e^{lambda1 s} - e^{lambda2 s}) / (lambda1 - lambda2)."""
    lam1, lam2 = complex(roots.lambda1), complex(roots.lambda2)
    return (np.expm1(lam1 * h) / lam1 - np.expm1(lam2 * h) / lam2) / (lam1 - lam2)


@pytest.mark.parametrize("order", [1, 2])
def test_step_with_frozen_single_mode_forcing_is_exact(grid_1d, params_1d, monkeypatch, order):
    mode, h = 3, 0.05
    force_u, force_v = 0.4 - 0.1j, -0.25 + 0.3j

    def frozen_forcing(state, use_filter=True):
        f_u = np.zeros(state.grid.shape, dtype=complex)
        f_v = np.zeros(state.grid.shape, dtype=complex)
        f_u[mode], f_v[mode] = force_u, force_v
        return SpectralField(state.grid, f_u), SpectralField(state.grid, f_v)

    monkeypatch.setattr("xsigma.integrator.nonlinearity", frozen_forcing)
    state = initial_state(grid_1d, params_1d, epsilon=0.3)
    integrator = DuhamelIntegrator(grid_1d, params_1d, IntegratorControls(order=order))
    new, report = integrator.step(state, h)
    assert report.status is Status.OK

    xi = float(grid_1d.xi_mag[mode])
    sigma = params_1d.sigma
    cases = [
        (
            Equation.VISCO,
            char_roots_visco(xi, sigma),
            state.u,
            state.u_t,
            new.u,
            new.u_t,
            force_u,
        ),
        (
            Equation.FRICTION,
            char_roots_friction(xi, sigma),
            state.v,
            state.v_t,
            new.v,
            new.v_t,
            force_v,
        ),
    ]
    for which, roots, pos, vel, new_pos, new_vel, force in cases:
        P = grid_propagator(grid_1d, params_1d, which, h).entries
        free_pos = P[..., 0, 0] * pos.coefficients + P[..., 0, 1] * vel.coefficients
        free_vel = P[..., 1, 0] * pos.coefficients + P[..., 1, 1] * vel.coefficients
        expected_pos = free_pos.copy()
        expected_vel = free_vel.copy()
        expected_pos[mode] += _forced_mode_integral(roots, h) * force
        expected_vel[mode] += kernel_hat(roots, h) * force
        np.testing.assert_allclose(new_pos.coefficients, expected_pos, rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(new_vel.coefficients, expected_vel, rtol=1e-10, atol=1e-10)


def test_step_function_matches_integrator(grid_1d, params_1d):
    state = initial_state(grid_1d, params_1d, epsilon=0.3)
    new, report = step(state, 0.02)
    assert report.status is Status.OK
    assert new.t == pytest.approx(0.02)
    assert report.max_abs_u == pytest.approx(np.max(np.abs(to_physical(new.u))))
    with pytest.raises(ValueError, match="dt must be positive"):
        step(state, 0.0)


def test_nan_nonlinearity_freezes_state(grid_1d, params_1d, monkeypatch):
    def nan_forcing(state, use_filter=True):
        nan = np.full(state.grid.shape, np.nan + 0j)
        return SpectralField(state.grid, nan), SpectralField(state.grid, nan)

    monkeypatch.setattr("xsigma.integrator.nonlinearity", nan_forcing)
    state = initial_state(grid_1d, params_1d, epsilon=0.3)
    new, report = step(state, 0.01)
    assert report.status is Status.NON_FINITE
    assert new is state

    controls = IntegratorControls(adaptive=False)
    ds, report = integrate(state, 1.0, controls)
    assert report.status is Status.NON_FINITE
    assert ds.attrs["stop_reason"] == "non_finite"
    assert ds.attrs["status"] == "non_finite"
    assert ds["status"].values[-1] == "non_finite"
    assert ds.attrs["t_detect"] == pytest.approx(0.01)


def test_nan_nonlinearity_with_adaptive_steps_underflows(grid_1d, params_1d, monkeypatch):
    def nan_forcing(state, use_filter=True):
        nan = np.full(state.grid.shape, np.nan + 0j)
        return SpectralField(state.grid, nan), SpectralField(state.grid, nan)

    monkeypatch.setattr("xsigma.integrator.nonlinearity", nan_forcing)
    state = initial_state(grid_1d, params_1d, epsilon=0.3)
    ds, report = integrate(state, 1.0, IntegratorControls(dt_min=1e-4))
    assert ds.attrs["stop_reason"] == "dt_underflow"
    assert ds.attrs["status"] == "blowup_suspected"
    assert ds.attrs["t_detect"] == 0.0


def test_detect_blowup_none_for_decay():
    times = np.linspace(0, 10, 21)
    assert detect_blowup(_monitor_dataset(times, 1.0 / (1.0 + times))) is None


def test_detect_blowup_interpolates_log_monitor():
    times = np.arange(0.0, 8.5, 0.5)
    controls = IntegratorControls(blowup_factor=10**5.7)
    t = detect_blowup(_monitor_dataset(times, 10.0**times), controls)
    assert t == pytest.approx(5.7, rel=1e-9)


def test_detect_blowup_refines_by_bisection():
    times = np.arange(0.0, 8.5, 0.5)
    controls = IntegratorControls(blowup_factor=10**5.7)
    t = detect_blowup(_monitor_dataset(times, 10.0**times), controls, refine=lambda s: 10.0**s)
    assert t == pytest.approx(5.7, abs=1e-5)
    assert t >= 5.7


def test_detect_blowup_on_overflow():
    times = np.round(np.arange(0.0, 3.25, 0.1), 10)
    monitor = np.ones_like(times)
    monitor[-1] = np.inf
    t = detect_blowup(_monitor_dataset(times, monitor))
    assert 3.1 <= t <= 3.2


def test_detect_blowup_from_norm_reports():
    def report(t, linf):
        return NormReport(l1=1.0, l2=1.0, lq=1.0, linf=linf, hdot_sigma=1.0, time=t)

    history = [(report(t, 10.0**t), report(t, 0.0)) for t in range(8)]
    t = detect_blowup(history, IntegratorControls(blowup_factor=1e6 + 1))
    assert 6.0 < t <= 7.0


def test_detect_blowup_rejects_empty_history():
    with pytest.raises(ValueError, match="empty"):
        detect_blowup([])


def test_trajectory_variables_and_attrs(grid_1d, params_1d):
    state = initial_state(grid_1d, params_1d, epsilon=0.2)
    ds, report = integrate(state, 1.0, sample_times=[0.25, 0.5, 0.75])
    np.testing.assert_allclose(ds["time"].values, [0.0, 0.25, 0.5, 0.75, 1.0])
    for name in TRAJECTORY_COLUMNS[1:]:
        assert name in ds
    assert "local_norm_u" in ds and "local_norm_v" in ds
    assert ds.attrs["stop_reason"] == "completed"
    assert ds.attrs["status"] == "ok"
    assert np.isnan(ds.attrs["t_detect"])
    assert ds.attrs["grid_points_per_axis"] == 64
    assert ds.attrs["param_sigma"] == 1.5
    assert ds.attrs["control_order"] == 2
    assert ds.attrs["reference_scale"] == pytest.approx(0.4)
    assert "history" in ds.attrs
    assert report.status is Status.OK


def test_integrate_rejects_non_increasing_end(grid_1d, params_1d):
    state = initial_state(grid_1d, params_1d, epsilon=0.2)
    with pytest.raises(ValueError, match="must exceed"):
        integrate(state, 0.0)


def test_radial_data_keeps_diagonal_symmetry():
    grid = Grid(2, 32, 8.0)
    params = ModelParams(sigma=1.5, dim=2, p=2.0, q=2.0)
    state = initial_state(grid, params, epsilon=0.5)
    ds, _ = integrate(state, 0.5, IntegratorControls(store_fields=True), sample_times=[0.5])
    for name in ("u", "v"):
        snap = ds[name].isel(time=-1).values
        assert np.max(np.abs(snap - snap.T)) <= 1e-12 * np.max(np.abs(snap))


def test_stored_fields_start_from_data(grid_1d, params_1d):
    state = initial_state(grid_1d, params_1d, epsilon=0.2)
    ds, _ = integrate(state, 0.5, IntegratorControls(store_fields=True))
    assert ds["u"].dims == ("time", "x")
    np.testing.assert_allclose(ds["u1"].values, to_physical(state.u_t))
    np.testing.assert_array_equal(ds["u"].isel(time=0).values, 0.0)


def test_trajectory_to_csv_header(grid_1d, params_1d, tmp_path):
    state = initial_state(grid_1d, params_1d, epsilon=0.2)
    ds, _ = integrate(state, 0.5, sample_times=[0.5])
    path = trajectory_to_csv(ds, tmp_path / "trajectory.csv")
    lines = open(path).read().splitlines()
    assert lines[0] == ",".join(TRAJECTORY_COLUMNS)
    assert len(lines) == 3


@pytest.mark.slow
def test_blowup_time_insensitive_to_threshold():
    grid = Grid(1, 128, 32.0)
    params = ModelParams(sigma=1.5, dim=1, p=2.0, q=2.0)
    state = initial_state(grid, params, epsilon=2.0)
    times = []
    for factor in (1e4, 1e6):
        ds, report = integrate(state, 50.0, IntegratorControls(blowup_factor=factor))
        assert report.status is Status.BLOWUP_SUSPECTED
        times.append(ds.attrs["t_detect"])
    assert abs(times[1] - times[0]) / times[1] < 0.05
