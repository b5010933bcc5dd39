import numpy as np
import pytest
import xarray as xr

from xsigma.criticality import (
    VERDICT_CODES,
    Curve,
    Verdict,
    classify,
    curve_q_of_p,
    emit_region_map,
    gamma_c,
    gamma_c_values,
    lifespan_exponent,
    loss_of_decay,
    lower_bound_exponent,
    region_regime,
    sigma1_condition,
    solution_space_norm,
    decay_rate_table,
)
from xsigma.params import ModelParams


def _simplified_gamma_c(sigma, n, p, q):
    """Independent form of Gamma_c through the two simplified aggregates."""
    a1 = -n + (4 * sigma - n) / p + (2 * n + 2 * sigma) / (p * q)
    a2 = 2 * sigma - 2 * n + (n + 2 * sigma) / q + (n + 2 * sigma) / (p * q)
    return p * q / (p * q - 1) * np.maximum(a1, a2)


def _random_points(size, seed, sigma_range=(1.0, 4.0)):
    rng = np.random.default_rng(seed)
    sigma = rng.uniform(*sigma_range, size) + 1e-9
    n = sigma * rng.uniform(1.0, 2.0, size)
    p = rng.uniform(1.0, 12.0, size) + 1e-6
    q = rng.uniform(1.0, 12.0, size) + 1e-6
    return sigma, n, p, q


@pytest.mark.parametrize(
    "sigma, n, p, q, expected",
    [
        (2.0, 3.0, 2.0, 2.0, 13.0 / 3.0),
        (1.5, 2.0, 2.0, 2.0, 11.0 / 3.0),
        (1.5, 2.0, 5.0, 8.0, -0.25 * 40.0 / 39.0),
    ],
)
def test_gamma_c_spot_values(sigma, n, p, q, expected):
    value = gamma_c(ModelParams(sigma=sigma, dim=n, p=p, q=q))
    assert value == pytest.approx(expected, abs=1e-12)
    assert value == pytest.approx(_simplified_gamma_c(sigma, n, p, q), abs=1e-12)


def test_gamma_c_matches_simplified_form():
    sigma, n, p, q = _random_points(2000, seed=0)
    np.testing.assert_allclose(
        gamma_c_values(sigma, n, p, q), _simplified_gamma_c(sigma, n, p, q), rtol=1e-10, atol=1e-12
    )


def test_gamma_c_rejects_small_exponents():
    with pytest.raises(ValueError, match="p > 1 and q > 1"):
        gamma_c_values(1.5, 2.0, 1.0, 2.0)


def test_gamma_c_sign_equivalence():
    """sign(Gamma_c) == sign(max(ratio1, ratio2) - n/(2 sigma))."""
    sigma, n, p, q = _random_points(10_000, seed=1)
    ratio1 = (2 * q + 1) / (p * q + q - 2)
    ratio2 = (p * q + p + 1) / (2 * p * q - p - 1)
    gap = np.maximum(ratio1, ratio2) - n / (2 * sigma)
    gc = gamma_c_values(sigma, n, p, q)
    keep = (np.abs(gap) > 1e-9) & (np.abs(gc) > 1e-9)
    assert keep.sum() > 9_000
    np.testing.assert_array_equal(np.sign(gc[keep]), np.sign(gap[keep]))


def test_gamma_c_positive_for_small_dimension():
    rng = np.random.default_rng(2)
    sigma = rng.uniform(1.0, 4.0, 2000)
    n = sigma * rng.uniform(0.05, 1.0, 2000)
    p = rng.uniform(1.01, 12.0, 2000)
    q = rng.uniform(1.01, 12.0, 2000)
    assert np.all(gamma_c_values(sigma, n, p, q) > 0)


def test_gamma_c_decreases_on_blowup_side():
    sigma, n, p, q = _random_points(3000, seed=3)
    gc = gamma_c_values(sigma, n, p, q)
    blow = gc > 1e-6
    h = 1e-3
    assert np.all(gamma_c_values(sigma, n, p + h, q)[blow] < gc[blow])
    assert np.all(gamma_c_values(sigma, n, p, q + h)[blow] < gc[blow])


@pytest.mark.parametrize(
    "sigma, n, p, q, verdict",
    [
        (2.0, 3.0, 2.0, 2.0, Verdict.BLOW_UP),
        (1.5, 2.0, 5.0, 8.0, Verdict.GLOBAL_EXISTENCE),
        (1.5, 2.0, 5.0, 6.0, Verdict.CRITICAL),
        (1.5, 1.0, 5.0, 5.0, Verdict.BLOW_UP),
        (1.5, 3.0, 5.0, 5.0, Verdict.OUTSIDE_THEORY),
        (0.8, 1.5, 2.0, 2.0, Verdict.OUTSIDE_THEORY),
    ],
)
def test_classify(sigma, n, p, q, verdict):
    assert classify(ModelParams(sigma=sigma, dim=n, p=p, q=q)).verdict is verdict


def test_classify_report_contents(global_params):
    report = classify(global_params)
    assert report.ratio1 == pytest.approx(17 / 46)
    assert report.ratio2 == pytest.approx(46 / 74)
    assert report.max_ratio == pytest.approx(46 / 74)
    assert report.scale == pytest.approx(2 / 3)
    assert report.gamma_c < 0
    assert report.asymptotes["p_crit"] == pytest.approx(2.5)
    assert report.asymptotes["q_crit"] == pytest.approx(7.0)
    assert report.loss.eps1_plus == 0.0


def test_asymptotes_absent_for_small_dimension():
    report = classify(ModelParams(sigma=1.5, dim=1.0, p=2.0, q=2.0))
    assert report.asymptotes["q_crit"] is None
    assert report.asymptotes["q0"] is None


def test_curve_values():
    params = ModelParams(sigma=1.5, dim=2.0, p=5.0, q=2.0)
    assert curve_q_of_p(params, Curve.CURVE2) == pytest.approx(6.0)
    assert curve_q_of_p(params, "curve1", p=params.p0) is None
    near = params.p0 + 1e-7 * (4 * params.sigma / params.dim)
    assert curve_q_of_p(params, Curve.CURVE1, p=near) > 1e6
    assert curve_q_of_p(ModelParams(sigma=1.5, dim=1.0, p=2.0, q=2.0), Curve.CURVE2) is None


def test_curves_cross_at_critical_exponents():
    params = ModelParams(sigma=1.75, dim=2.5, p=2.0, q=2.0)
    assert params.p_crit == pytest.approx(2.4)
    for curve in Curve:
        q = curve_q_of_p(params, curve, p=params.p_crit)
        assert abs(q - 17.0 / 3.0) < 1e-10


def test_curve_ordering_switches_at_p_crit():
    params = ModelParams(sigma=1.75, dim=2.5, p=2.0, q=2.0)
    for p in np.linspace(params.p0 + 0.01, 12.0, 400):
        if abs(p - params.p_crit) < 1e-9:
            continue
        q1 = curve_q_of_p(params, Curve.CURVE1, p=p)
        q2 = curve_q_of_p(params, Curve.CURVE2, p=p)
        assert (q2 >= q1) == (p >= params.p_crit)


def test_loss_of_decay():
    loss = loss_of_decay(ModelParams(sigma=1.5, dim=2.0, p=4.0, q=6.0))
    assert loss.eps1 == pytest.approx(-0.99)
    assert loss.eps1_plus == 0.0
    boundary = loss_of_decay(ModelParams(sigma=1.5, dim=2.0, p=2.515, q=6.0))
    assert boundary.eps1 == pytest.approx(0.0, abs=1e-12)


def test_rate_table(global_params):
    table = decay_rate_table(global_params)
    assert table.rates["lq_u"] == pytest.approx(-1 / 6)
    assert table.rates["l2_vt"] == pytest.approx(-2 / 3)
    assert len(table.rates) == 7
    assert table.weights["f1"] == table.rates["lq_u"]
    assert table.weights["g3"] == table.rates["l2_vt"]
    ds = table.to_dataset()
    assert float(ds["predicted_exponent"].sel(quantity="lq_u")) == pytest.approx(-1 / 6)
    assert ds.attrs["weight_g3"] == pytest.approx(-2 / 3)


def test_rate_table_rejects_blowup_points(params_2d):
    with pytest.raises(ValueError, match="only available in the global-existence region"):
        decay_rate_table(params_2d)


def test_solution_space_norm(global_params):
    table = decay_rate_table(global_params)
    t = np.linspace(0.0, 50.0, 26)
    exact = xr.Dataset(
        {name: ("time", (1.0 + t) ** rate) for name, rate in table.rates.items()},
        coords={"time": t},
    )
    np.testing.assert_allclose(solution_space_norm(exact, table).values, 7.0, rtol=1e-12)

    bumpy = exact.copy()
    bumpy["l2_v"] = bumpy["l2_v"] * (1.0 + 0.5 * np.sin(t))
    running = solution_space_norm(bumpy, table).values
    assert np.all(np.diff(running) >= 0)


def test_sigma1_condition():
    assert sigma1_condition(2.0, 4.0, 3.0)
    report = sigma1_condition(2.0, 4.0, 3.0)
    assert report.value == pytest.approx(1.0)
    assert report.admissible
    assert report.exceeds_ratio1

    failing = sigma1_condition(2.0, 2.0, 3.0)
    assert not failing
    assert failing.value == pytest.approx(5 / 3)


def test_sigma1_condition_flags_inadmissible_points():
    with pytest.warns(UserWarning, match="outside the admissible"):
        report = sigma1_condition(4.0, 2.0, 3.0)
    assert not report.admissible


@pytest.mark.parametrize(
    "sigma, n, expected",
    [(1.5, 2.0, -9.0 / 11.0), (2.0, 3.0, -12.0 / 13.0)],
)
def test_lifespan_exponent(sigma, n, expected):
    params = ModelParams(sigma=sigma, dim=n, p=2.0, q=2.0)
    assert lifespan_exponent(params) == pytest.approx(expected, abs=1e-12)
    assert lower_bound_exponent(params) == pytest.approx(-expected, abs=1e-12)


def test_lifespan_exponent_absent_off_blowup_side(global_params):
    assert lifespan_exponent(global_params) is None


def test_lower_bound_matches_gamma_c():
    sigma, n, p, q = _random_points(500, seed=4)
    for s, d, a, b in zip(sigma, n, p, q):
        params = ModelParams(sigma=s, dim=d, p=a, q=b)
        gc = gamma_c(params)
        if gc > 1e-6:
            assert lower_bound_exponent(params) == pytest.approx(2 * s / gc, rel=1e-10)


def test_region_regime():
    assert region_regime(1.75, 2.5) == "upper"
    assert region_regime(1.5, 1.8) == "lower"
    assert region_regime(1.5, 3.5) is None


def test_region_map_tiles_the_plane():
    params = ModelParams(sigma=1.75, dim=2.5, p=2.0, q=2.0)
    region, curves, constants = emit_region_map(params, num=21)
    codes = region["verdict_code"].values
    assert codes.shape == (21, 21)
    assert np.all(np.isin(codes, list(VERDICT_CODES.values())))
    assert region["verdict"].sel(p=1.05, q=1.05).item() == "blow_up"
    assert region["verdict"].sel(p=12.0, q=12.0).item() == "global_existence"
    assert region.attrs["regime"] == "upper"

    blow = codes == VERDICT_CODES[Verdict.BLOW_UP]
    life = region["lifespan_exponent"].values
    assert np.all(life[blow] < 0)
    assert np.all(np.isnan(life[~blow]))

    assert float(constants["value"].sel(name="p_crit")) == pytest.approx(2.4)
    assert set(np.unique(curves["curve_id"].values)) == {"curve1", "curve2"}


def test_region_map_crossing_in_traces():
    params = ModelParams(sigma=1.75, dim=2.5, p=2.0, q=2.0)
    _, curves, _ = emit_region_map(params, num=11)
    at_crit = curves.where(np.abs(curves["p"] - params.p_crit) < 1e-14, drop=True)
    assert at_crit.sizes["point"] == 2
    np.testing.assert_allclose(at_crit["q"].values, params.q_crit, atol=1e-10)


def test_region_map_chunked_matches_eager():
    params = ModelParams(sigma=1.5, dim=1.8, p=2.0, q=2.0)
    eager = emit_region_map(params, num=(17, 13)).region
    lazy = emit_region_map(params, num=(17, 13), chunks=5).region
    for name in ("verdict_code", "ratio1", "ratio2", "gamma_c", "lifespan_exponent"):
        xr.testing.assert_allclose(eager[name], lazy[name])
    assert eager.attrs["regime"] == "lower"


def test_region_map_refinement_keeps_verdicts():
    params = ModelParams(sigma=1.75, dim=2.5, p=2.0, q=2.0)
    coarse = emit_region_map(params, num=11).region
    fine = emit_region_map(params, num=21).region
    shared = fine["verdict_code"].sel(
        p=coarse["p"].values, q=coarse["q"].values, method="nearest"
    )
    np.testing.assert_array_equal(shared.values, coarse["verdict_code"].values)


def test_region_map_rejects_small_exponents():
    params = ModelParams(sigma=1.5, dim=2.0, p=2.0, q=2.0)
    with pytest.raises(ValueError, match="p > 1 and q > 1"):
        emit_region_map(params, p_values=[1.0, 2.0], q_values=[2.0])
