import numpy as np
import pytest

from xsigma.core import (
    SpectralField,
    apply_fractional_laplacian,
    gagliardo_nirenberg_ratio,
    gaussian_field,
    gn_theta,
    hdot_norm,
    imag_residue,
    l2_from_coefficients,
    norms,
    spectral_filter,
    to_physical,
    to_spectral,
)
from xsigma.grid import Grid
from xsigma.params import ModelParams


def test_constant_field_has_single_mean_coefficient():
    """A constant field maps to the zero mode only."""
    grid = Grid(2, 16, 3.0)
    f = to_spectral(np.ones(grid.shape), grid)
    expected = np.zeros(grid.shape, dtype=complex)
    expected[0, 0] = 1.0
    np.testing.assert_allclose(f.coefficients, expected, atol=1e-14)


def test_cosine_has_two_half_coefficients():
    """cos(pi x / L) has coefficient 1/2 at k = +1 and k = -1."""
    grid = Grid(1, 32, 5.0)
    x = grid.axis
    f = to_spectral(np.cos(np.pi * x / grid.half_width), grid)
    coeffs = f.coefficients
    np.testing.assert_allclose(coeffs[1], 0.5, atol=1e-14)
    np.testing.assert_allclose(coeffs[-1], 0.5, atol=1e-14)
    coeffs_rest = np.delete(coeffs, [1, grid.points_per_axis - 1])
    np.testing.assert_allclose(coeffs_rest, 0.0, atol=1e-14)


def test_round_trip_random_field():
    grid = Grid(2, 16, 4.0)
    rng = np.random.default_rng(42)
    values = rng.standard_normal(grid.shape)
    back = to_physical(to_spectral(values, grid))
    assert np.max(np.abs(back - values)) < 1e-12


def test_round_trip_flat_input_3d():
    grid = Grid(3, 8, 2.0)
    rng = np.random.default_rng(1)
    values = rng.standard_normal(grid.size)
    back = to_physical(to_spectral(values, grid))
    np.testing.assert_allclose(back.ravel(), values, atol=1e-12)


def test_to_spectral_rejects_non_finite():
    grid = Grid(1, 16, 1.0)
    values = np.zeros(grid.shape)
    values[3] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        to_spectral(values, grid)


def test_to_spectral_rejects_wrong_size():
    grid = Grid(1, 16, 1.0)
    with pytest.raises(ValueError, match="Expected 16 samples"):
        to_spectral(np.zeros(15), grid)


def test_grid_validation():
    with pytest.raises(ValueError, match="power of two"):
        Grid(1, 12, 1.0)
    with pytest.raises(ValueError, match="dimension"):
        Grid(4, 16, 1.0)
    with pytest.raises(ValueError, match="half_width"):
        Grid(1, 16, 0.0)


def test_spectral_field_is_read_only():
    grid = Grid(1, 8, 1.0)
    f = SpectralField.zeros(grid)
    with pytest.raises(ValueError):
        f.coefficients[0] = 1.0


def test_real_field_is_conjugate_symmetric():
    grid = Grid(2, 16, 4.0)
    rng = np.random.default_rng(7)
    f = to_spectral(rng.standard_normal(grid.shape), grid)
    # The Nyquist row has no partner and is excluded by the check.
    assert f.conjugate_symmetry_error() < 1e-12


def test_fractional_laplacian_single_mode():
    """cos(2x) on [-pi, pi) is scaled by |xi|^2 = 4 for gamma = 1."""
    grid = Grid(1, 32, np.pi)
    x = grid.axis
    f = to_spectral(np.cos(2 * x), grid)
    out = to_physical(apply_fractional_laplacian(f, 1.0))
    np.testing.assert_allclose(out, 4 * np.cos(2 * x), atol=1e-12)


def test_fractional_laplacian_kills_constants():
    grid = Grid(2, 16, 2.0)
    f = to_spectral(np.full(grid.shape, 3.0), grid)
    out = apply_fractional_laplacian(f, 0.7)
    np.testing.assert_allclose(out.coefficients, 0.0, atol=1e-15)


@pytest.mark.parametrize("power", [0.0, -0.5])
def test_fractional_laplacian_rejects_non_positive_power(power):
    grid = Grid(1, 16, 1.0)
    with pytest.raises(ValueError, match="must be positive"):
        apply_fractional_laplacian(SpectralField.zeros(grid), power)


def test_laplacian_of_gaussian_matches_second_derivative():
    """(-Delta) exp(-x^2) = (2 - 4x^2) exp(-x^2)."""
    grid = Grid(1, 256, 20.0)
    x = grid.axis
    f = to_spectral(np.exp(-(x**2)), grid)
    out = to_physical(apply_fractional_laplacian(f, 1.0))
    expected = (2.0 - 4.0 * x**2) * np.exp(-(x**2))
    rel = np.linalg.norm(out - expected) / np.linalg.norm(expected)
    assert rel < 1e-6


def test_fractional_laplacian_semigroup():
    grid = Grid(2, 32, 6.0)
    f = gaussian_field(grid, width=1.5)
    twice = apply_fractional_laplacian(apply_fractional_laplacian(f, 0.3), 0.45)
    once = apply_fractional_laplacian(f, 0.75)
    np.testing.assert_allclose(twice.coefficients, once.coefficients, rtol=1e-12, atol=1e-15)


def test_fractional_laplacian_preserves_real_fields():
    grid = Grid(2, 32, 6.0)
    rng = np.random.default_rng(3)
    f = to_spectral(rng.standard_normal(grid.shape), grid)
    out = apply_fractional_laplacian(f, 0.65)
    assert imag_residue(out) < 1e-12


def test_norms_of_constant_field():
    grid = Grid(2, 16, 2.0)
    params = ModelParams(sigma=1.5, dim=2, p=2.0, q=3.0)
    report = norms(to_spectral(np.ones(grid.shape), grid), params, time=1.5)
    np.testing.assert_allclose(report.l1, (2 * grid.half_width) ** 2)
    np.testing.assert_allclose(report.linf, 1.0)
    np.testing.assert_allclose(report.hdot_sigma, 0.0, atol=1e-12)
    assert report.time == 1.5
    assert report.finite


def test_hdot_norm_single_mode():
    """One mode a e^{i xi x} with |xi| = 3: || |D|^1.5 f || = |a| 3^1.5 (2L)^(1/2)."""
    grid = Grid(1, 32, np.pi)
    coeffs = np.zeros(grid.shape, dtype=complex)
    a = 0.7 - 0.2j
    coeffs[3] = a
    f = SpectralField(grid, coeffs)
    expected = abs(a) * 3**1.5 * np.sqrt(2 * grid.half_width)
    np.testing.assert_allclose(hdot_norm(f, 1.5), expected, rtol=1e-12)


def test_gaussian_l2_matches_closed_form():
    """|| exp(-|x|^2) ||_{L^2(R^2)} = (pi / 2)^(1/2)."""
    grid = Grid(2, 256, 15.0)
    params = ModelParams(sigma=1.5, dim=2, p=2.0, q=2.0)
    report = norms(gaussian_field(grid), params)
    np.testing.assert_allclose(report.l2, np.sqrt(np.pi / 2), rtol=1e-8)


def test_plancherel():
    grid = Grid(2, 64, 6.0)
    params = ModelParams(sigma=1.5, dim=2, p=2.0, q=2.0)
    f = gaussian_field(grid, amplitude=2.0, width=1.3, center=[0.5, -0.25])
    np.testing.assert_allclose(norms(f, params).l2, l2_from_coefficients(f), rtol=1e-10)


def test_norms_interpolation_inequality():
    grid = Grid(1, 128, 10.0)
    params = ModelParams(sigma=1.5, dim=1, p=2.0, q=2.0)
    report = norms(gaussian_field(grid, width=0.8), params)
    assert report.l2 <= np.sqrt(report.l1 * report.linf) * (1 + 1e-12)


def test_norms_flag_non_finite_fields():
    grid = Grid(1, 16, 1.0)
    params = ModelParams(sigma=1.5, dim=1, p=2.0, q=2.0)
    coeffs = np.zeros(grid.shape, dtype=complex)
    coeffs[2] = np.inf
    report = norms(SpectralField(grid, coeffs), params)
    assert not report.finite
    assert np.isinf(report.l2) and np.isinf(report.hdot_sigma)


def test_gn_theta_examples():
    assert gn_theta(0.0, 1.5, 3.0, 3.0, 2.0, 2).theta == pytest.approx(0.0)
    assert gn_theta(1.5, 1.5, 2.0, 4.0, 2.0, 2).theta == pytest.approx(1.0)
    result = gn_theta(0.0, 1.5, 4.0, 2.0, 2.0, 2)
    assert result.theta == pytest.approx(1.0 / 3.0)
    assert result.admissible


def test_gn_theta_zero_denominator():
    with pytest.raises(ValueError, match="denominator vanishes"):
        gn_theta(0.0, 0.5, 3.0, 4.0, 2.0, 2)


def test_gagliardo_nirenberg_ratio_is_dilation_invariant():
    """The ratio is unchanged by rescaling x, so a single constant bounds it."""
    grid = Grid(2, 128, 12.0)
    ratios = [
        gagliardo_nirenberg_ratio(gaussian_field(grid, width=w), q=4.0, q1=2.0, a=1.5)
        for w in (1.0, 1.5)
    ]
    assert all(np.isfinite(r) and r > 0 for r in ratios)
    np.testing.assert_allclose(ratios[0], ratios[1], rtol=1e-6)


def _random_smooth_fields(grid, rng, count):
    """Alternating single Gaussians and signed mixtures of three bumps."""
    span = grid.half_width / 3.0
    for i in range(count):
        if i % 2 == 0:
            yield gaussian_field(
                grid, width=rng.uniform(0.8, 2.0), center=rng.uniform(-span, span, grid.dim)
            )
        else:
            coeffs = sum(
                gaussian_field(
                    grid,
                    amplitude=rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 2.0),
                    width=rng.uniform(0.8, 2.0),
                    center=rng.uniform(-span, span, grid.dim),
                ).coefficients
                for _ in range(3)
            )
            yield SpectralField(grid, coeffs)


@pytest.mark.parametrize("grid", [Grid(1, 256, 12.0), Grid(2, 64, 12.0)], ids=["1d", "2d"])
def test_gagliardo_nirenberg_constant_fitted_on_half_bounds_the_rest(grid):
    rng = np.random.default_rng(2024)
    ratios = np.array(
        [
            gagliardo_nirenberg_ratio(f, q=4.0, q1=2.0, a=1.5)
            for f in _random_smooth_fields(grid, rng, 120)
        ]
    )
    assert np.all(np.isfinite(ratios)) and np.all(ratios > 0)
    half = ratios.size // 2
    constant = ratios[:half].max()
    assert np.all(ratios[half:] <= 1.5 * constant)


def test_spectral_filter_leaves_low_modes():
    grid = Grid(1, 64, 8.0)
    filt = spectral_filter(grid)
    np.testing.assert_allclose(filt[:8], 1.0, atol=1e-12)
    assert filt[grid.points_per_axis // 2] == 0.0
    assert not filt.flags.writeable
