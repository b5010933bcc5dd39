from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Tuple, Union

import numpy as np
import xarray as xr

from xsigma.core import SpectralField
from xsigma.grid import Grid
from xsigma.params import ModelParams
from xsigma.utils import update_history

ArrayLike = Union[float, complex, np.ndarray]

# |lambda1 - lambda2| * t below this switches to the confluent series.
CONFLUENT_THRESHOLD = 1e-4
_SINHC_TERMS = 6
_MOMENT_TERMS = 30
# Relative size of the discriminant treated as an exact double root.
_DOUBLE_ROOT_TOL = 1e-12
_CONSISTENCY_TOL = 1e-9


class Equation(str, Enum):
    """Which equation of the system a mode belongs to."""

    VISCO = "visco"
    FRICTION = "friction"


class Regime(IntEnum):
    OSCILLATORY = 0
    DOUBLE_ROOT = 1
    REAL_DISTINCT = 2


@dataclass(frozen=True)
class CharRoots:
    """
    Roots of lambda^2 + d lambda + |xi|^(2 sigma) = 0.

    Attributes are scalars for scalar ``xi_mag`` and arrays otherwise.
    ``lambda1`` is the "+" branch and ``lambda2`` the "-" branch.
    """

    lambda1: ArrayLike
    lambda2: ArrayLike
    regime: Union[Regime, np.ndarray]
    xi_mag: ArrayLike
    stiffness: ArrayLike

    @property
    def mean(self) -> ArrayLike:
        return 0.5 * (self.lambda1 + self.lambda2)

    @property
    def gap(self) -> ArrayLike:
        return self.lambda1 - self.lambda2


def _package_roots(
    lam1: np.ndarray,
    lam2: np.ndarray,
    regime: np.ndarray,
    xi: np.ndarray,
    stiffness: np.ndarray,
) -> CharRoots:
    if xi.ndim == 0:
        return CharRoots(
            complex(lam1),
            complex(lam2),
            Regime(int(regime)),
            float(xi),
            float(stiffness),
        )
    return CharRoots(lam1, lam2, regime, xi, stiffness)


def _check_xi(xi_mag: ArrayLike) -> np.ndarray:
    xi = np.asarray(xi_mag, dtype=float)
    if np.any(xi < 0) or not np.all(np.isfinite(xi)):
        raise ValueError("xi_mag must be finite and non-negative.")
    return xi


def char_roots_visco(xi_mag: ArrayLike, sigma: float) -> CharRoots:
    """
    Characteristic roots of the visco-elastically damped equation.

    lambda^2 + a lambda + a = 0 with a = |xi|^(2 sigma). Above the branch
    point |xi| = 2^(1/sigma) the roots are real; the minus branch is
    computed directly and the plus branch through lambda1 = a / lambda2.

    Parameters
    ----------
    xi_mag : float or np.ndarray
        |xi| >= 0.
    sigma : float
        Order of the fractional Laplacian.

    Returns
    -------
    CharRoots
        The root pair.
    """
    xi = _check_xi(xi_mag)
    a = xi ** (2.0 * sigma)
    s = xi**sigma
    disc = a * (a - 4.0)
    double = np.abs(disc) <= _DOUBLE_ROOT_TOL * np.maximum(a * a, 1.0)
    real = (disc > 0) & ~double
    with np.errstate(divide="ignore", invalid="ignore"):
        minus = -0.5 * (a + s * np.sqrt(np.where(real, a - 4.0, 0.0)))
        plus = a / np.where(real, minus, 1.0)
        imag = 0.5 * s * np.sqrt(np.where(real | double, 0.0, 4.0 - a))
    lam1 = np.where(real, plus + 0j, np.where(double, -0.5 * a + 0j, -0.5 * a + 1j * imag))
    lam2 = np.where(real, minus + 0j, np.where(double, -0.5 * a + 0j, -0.5 * a - 1j * imag))
    regime = np.where(
        double, Regime.DOUBLE_ROOT, np.where(real, Regime.REAL_DISTINCT, Regime.OSCILLATORY)
    )
    return _package_roots(lam1, lam2, regime, xi, a)


def char_roots_friction(xi_mag: ArrayLike, sigma: float) -> CharRoots:
    """
    Characteristic roots of the frictionally damped equation.

    lambda^2 + lambda + a = 0 with a = |xi|^(2 sigma); real below
    |xi| = 2^(-1/sigma), a complex pair with real part -1/2 above.

    Parameters
    ----------
    xi_mag : float or np.ndarray
        |xi| >= 0.
    sigma : float
        Order of the fractional Laplacian.

    Returns
    -------
    CharRoots
        The root pair.
    """
    xi = _check_xi(xi_mag)
    a = xi ** (2.0 * sigma)
    disc = 1.0 - 4.0 * a
    double = np.abs(disc) <= _DOUBLE_ROOT_TOL
    real = (disc > 0) & ~double
    with np.errstate(invalid="ignore"):
        minus = -0.5 - 0.5 * np.sqrt(np.where(real, disc, 0.0))
        # lambda1 = -1/2 + sqrt(disc)/2 cancels for small a; use the product.
        plus = a / minus
        imag = 0.5 * np.sqrt(np.where(real | double, 0.0, -disc))
    lam1 = np.where(real, plus + 0j, np.where(double, -0.5 + 0j, -0.5 + 1j * imag))
    lam2 = np.where(real, minus + 0j, np.where(double, -0.5 + 0j, -0.5 - 1j * imag))
    regime = np.where(
        double, Regime.DOUBLE_ROOT, np.where(real, Regime.REAL_DISTINCT, Regime.OSCILLATORY)
    )
    return _package_roots(lam1, lam2, regime, xi, a)


def char_roots(which: Union[Equation, str], xi_mag: ArrayLike, sigma: float) -> CharRoots:
    which = Equation(which)
    if which is Equation.VISCO:
        return char_roots_visco(xi_mag, sigma)
    return char_roots_friction(xi_mag, sigma)


def damping_symbol(which: Union[Equation, str], stiffness: ArrayLike) -> ArrayLike:
    """d(xi): |xi|^(2 sigma) for the visco equation, 1 for friction."""
    if Equation(which) is Equation.VISCO:
        return stiffness
    return np.ones_like(np.asarray(stiffness, dtype=float))


def _sinhc(z: np.ndarray) -> np.ndarray:
    """sinh(z)/z from its Taylor series; only used for |z| small."""
    z2 = z * z
    total = np.zeros_like(z)
    term = np.ones_like(z)
    for k in range(_SINHC_TERMS):
        total = total + term
        term = term * z2 / ((2 * k + 2) * (2 * k + 3))
    return total


def _cosh_series(z: np.ndarray) -> np.ndarray:
    z2 = z * z
    total = np.zeros_like(z)
    term = np.ones_like(z)
    for k in range(_SINHC_TERMS):
        total = total + term
        term = term * z2 / ((2 * k + 1) * (2 * k + 2))
    return total


def exp_moments(z: ArrayLike, m_max: int) -> np.ndarray:
    """
    Moments M_m(z) = int_0^1 s^m exp(z s) ds for m = 0..m_max.

    M_0 is the first exponential-integrator weight (e^z - 1)/z. Small |z|
    uses the Taylor series, larger |z| the upward recurrence
    M_m = (e^z - m M_{m-1}) / z.

    Parameters
    ----------
    z : complex or np.ndarray
        Arguments, typically lambda * t with Re(z) <= 0.
    m_max : int
        Highest moment.

    Returns
    -------
    np.ndarray
        Array of shape ``(m_max + 1,) + np.shape(z)``.
    """
    z = np.asarray(z, dtype=np.complex128)
    shape = z.shape
    flat = z.ravel()
    out = np.empty((m_max + 1, flat.size), dtype=np.complex128)
    small = np.abs(flat) < 1.0

    if np.any(small):
        zs = flat[small]
        sums = np.zeros((m_max + 1, zs.size), dtype=np.complex128)
        term = np.ones_like(zs)
        for j in range(_MOMENT_TERMS):
            for m in range(m_max + 1):
                sums[m] += term / (j + m + 1)
            term = term * zs / (j + 1)
        out[:, small] = sums

    large = ~small
    if np.any(large):
        zl = flat[large]
        ez = np.exp(zl)
        prev = (ez - 1.0) / zl
        out[0, large] = prev
        for m in range(1, m_max + 1):
            prev = (ez - m * prev) / zl
            out[m, large] = prev

    return out.reshape((m_max + 1,) + shape)


def _kernel_parts(
    lam1: np.ndarray, lam2: np.ndarray, t: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """K, P11, P22 and the confluent mask/safe gap shared by all propagator pieces."""
    delta = lam1 - lam2
    mean = 0.5 * (lam1 + lam2)
    confluent = np.abs(delta) * t < CONFLUENT_THRESHOLD
    safe = np.where(confluent, 1.0, delta)
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        e1 = np.exp(lam1 * t)
        e2 = np.exp(lam2 * t)
        k_direct = (e1 - e2) / safe
        p11_direct = (lam1 * e2 - lam2 * e1) / safe
        p22_direct = (lam1 * e1 - lam2 * e2) / safe

        z = 0.5 * np.where(confluent, delta, 0.0) * t
        em = np.exp(mean * t)
        k_conf = t * em * _sinhc(z)
        c_conf = em * _cosh_series(z)
        p11_conf = c_conf - mean * k_conf
        p22_conf = c_conf + mean * k_conf

    kernel = np.where(confluent, k_conf, k_direct)
    p11 = np.where(confluent, p11_conf, p11_direct)
    p22 = np.where(confluent, p22_conf, p22_direct)
    return kernel, p11, p22, confluent, safe


def kernel_hat(roots: CharRoots, t: float) -> ArrayLike:
    """
    Divided difference (e^{lambda1 t} - e^{lambda2 t}) / (lambda1 - lambda2).

    When |lambda1 - lambda2| t < 1e-4 the confluent form
    t e^{mean t} sinhc(gap t / 2) is evaluated by series.

    Parameters
    ----------
    roots : CharRoots
        Root pair(s).
    t : float
        Time, t >= 0.

    Returns
    -------
    complex or np.ndarray
        The kernel, matching the shape of the roots.
    """
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}.")
    lam1 = np.asarray(roots.lambda1, dtype=np.complex128)
    lam2 = np.asarray(roots.lambda2, dtype=np.complex128)
    kernel = _kernel_parts(lam1, lam2, float(t))[0]
    return complex(kernel) if kernel.ndim == 0 else kernel


@dataclass(frozen=True)
class ModePropagator:
    """
    Per-mode linear solution operator for the state (u_hat, u_hat_t).

    Attributes
    ----------
    entries : np.ndarray
        P(t), shape ``(..., 2, 2)``.
    phi1 : np.ndarray
        (1/t) int_0^t P(tau) dtau, weight of a forcing constant over the step.
    phi2 : np.ndarray
        (1/t^2) int_0^t P(t - tau) tau dtau, weight of a forcing linear in time.
    t : float
        Step length.
    """

    entries: np.ndarray
    phi1: np.ndarray
    phi2: np.ndarray
    t: float

    @property
    def kernel(self) -> np.ndarray:
        return self.entries[..., 0, 1]


def _identity(shape: Tuple[int, ...], scale: float = 1.0) -> np.ndarray:
    out = np.zeros(shape + (2, 2), dtype=np.complex128)
    out[..., 0, 0] = scale
    out[..., 1, 1] = scale
    return out


def _assemble(
    lam1: np.ndarray, lam2: np.ndarray, a: np.ndarray, d: np.ndarray, t: float
) -> ModePropagator:
    shape = lam1.shape
    if t == 0:
        return ModePropagator(_identity(shape), _identity(shape), _identity(shape, 0.5), 0.0)

    kernel, p11, p22, confluent, safe = _kernel_parts(lam1, lam2, t)

    # I0 = int_0^t K, I1 = int_0^t tau K(tau) dtau.
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        m1 = exp_moments(lam1 * t, 1)
        m2 = exp_moments(lam2 * t, 1)
        i0_direct = t * (m1[0] - m2[0]) / safe
        i1_direct = t**2 * (m1[1] - m2[1]) / safe

        mean = 0.5 * (lam1 + lam2)
        gap2 = (np.where(confluent, lam1 - lam2, 0.0) * t) ** 2 / 24.0
        mm = exp_moments(mean * t, 4)
        i0_conf = t**2 * (mm[1] + gap2 * mm[3])
        i1_conf = t**3 * (mm[2] + gap2 * mm[4])

    i0 = np.where(confluent, i0_conf, i0_direct)
    i1 = np.where(confluent, i1_conf, i1_direct)

    entries = np.empty(shape + (2, 2), dtype=np.complex128)
    entries[..., 0, 0] = p11
    entries[..., 0, 1] = kernel
    entries[..., 1, 0] = -a * kernel
    entries[..., 1, 1] = p22

    phi1 = np.empty_like(entries)
    phi1[..., 0, 0] = (kernel + d * i0) / t
    phi1[..., 0, 1] = i0 / t
    phi1[..., 1, 0] = -a * i0 / t
    phi1[..., 1, 1] = kernel / t

    lag = t * i0 - i1
    phi2 = np.empty_like(entries)
    phi2[..., 0, 0] = (d * lag + i0) / t**2
    phi2[..., 0, 1] = lag / t**2
    phi2[..., 1, 0] = -a * lag / t**2
    phi2[..., 1, 1] = i0 / t**2

    return ModePropagator(entries, phi1, phi2, float(t))


def mode_propagator(
    roots: CharRoots, damping_symbol: ArrayLike, t: float, check: bool = True
) -> ModePropagator:
    """
    Matrix exponential of the companion form [[0, 1], [-a, -d]] and its
    Duhamel weights.

    Parameters
    ----------
    roots : CharRoots
        Roots of lambda^2 + d lambda + a = 0.
    damping_symbol : float or np.ndarray
        d(xi).
    t : float
        Time, t >= 0.
    check : bool, default True
        Verify lambda1 + lambda2 = -d and lambda1 lambda2 = a to 1e-9.

    Returns
    -------
    ModePropagator
        P(t) with phi1 and phi2 weights.
    """
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}.")
    lam1 = np.asarray(roots.lambda1, dtype=np.complex128)
    lam2 = np.asarray(roots.lambda2, dtype=np.complex128)
    a = np.asarray(roots.stiffness, dtype=float)
    d = np.broadcast_to(np.asarray(damping_symbol, dtype=float), lam1.shape)

    if check:
        sum_err = np.abs(lam1 + lam2 + d) / np.maximum(1.0, np.abs(d))
        prod_err = np.abs(lam1 * lam2 - a) / np.maximum(1.0, a)
        if np.any(sum_err > _CONSISTENCY_TOL) or np.any(prod_err > _CONSISTENCY_TOL):
            raise ValueError(
                "Damping symbol is inconsistent with the roots "
                f"(sum error {np.max(sum_err):.3g}, product error {np.max(prod_err):.3g})."
            )
    return _assemble(lam1, lam2, a, d, float(t))


def grid_propagator(
    grid: Grid, params: ModelParams, which: Union[Equation, str], t: float
) -> ModePropagator:
    """
    Propagators for every mode of a grid; Nyquist modes map to zero.

    Parameters
    ----------
    grid : Grid
        The grid.
    params : ModelParams
        Supplies sigma.
    which : Equation
        Equation the propagator belongs to.
    t : float
        Step length.

    Returns
    -------
    ModePropagator
        Arrays of shape ``grid.shape + (2, 2)``.
    """
    roots = char_roots(which, grid.xi_mag, params.sigma)
    prop = mode_propagator(roots, damping_symbol(which, roots.stiffness), t, check=False)
    mask = grid.nyquist_mask
    for arr in (prop.entries, prop.phi1, prop.phi2):
        arr[mask] = 0.0
    return prop


def evolve_linear(
    u1_hat: SpectralField,
    which: Union[Equation, str],
    t: float,
    params: ModelParams,
) -> Tuple[SpectralField, SpectralField]:
    """
    Linear solution with data (0, u1) at time t.

    Parameters
    ----------
    u1_hat : SpectralField
        Initial velocity.
    which : Equation
        Visco-elastic or frictional damping.
    t : float
        Time, t >= 0.
    params : ModelParams
        Supplies sigma.

    Returns
    -------
    tuple of SpectralField
        (u(t), u_t(t)); the position coefficients equal K_hat(t) u1_hat.
    """
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}.")
    grid = u1_hat.grid
    if t == 0:
        return SpectralField.zeros(grid), u1_hat
    roots = char_roots(which, grid.xi_mag, params.sigma)
    kernel, _, p22, _, _ = _kernel_parts(
        np.asarray(roots.lambda1), np.asarray(roots.lambda2), float(t)
    )
    coeffs = np.where(grid.nyquist_mask, 0.0, u1_hat.coefficients)
    return (
        u1_hat.with_coefficients(kernel * coeffs),
        u1_hat.with_coefficients(p22 * coeffs),
    )


def _visco_admissibility(params: ModelParams, m: float, alpha1: float, alpha2: float) -> bool:
    n, sigma = params.dim, params.sigma
    inv1, inv2, inv_m = 1.0 / alpha1, 1.0 / alpha2, 1.0 / m
    ordered = 1.0 <= alpha1 <= m <= alpha2
    spread = n * (inv1 - inv2) + n * sigma * max(0.5 - inv1, inv2 - 0.5) < sigma
    window = 0.5 <= inv_m - inv2 < 2.0 * sigma / n
    return bool(ordered and spread and window)


def predicted_linear_rates(
    params: ModelParams,
    which: Union[Equation, str],
    m: float = 1.0,
    alpha1: float = 1.0,
    alpha2: float = math.inf,
) -> xr.Dataset:
    """
    Predicted polynomial decay exponents of the linear problems.

    Parameters
    ----------
    params : ModelParams
        Exponents; only sigma and dim are read.
    which : Equation
        Visco-elastic or frictional damping.
    m : float, default 1.0
        Data space L^m of the visco energy estimate, m in [1, 2].
    alpha1, alpha2 : float
        Data and target Lebesgue exponents of the visco L^alpha2 estimate.

    Returns
    -------
    xr.Dataset
        Indexed by ``quantity`` with ``predicted_exponent``, ``source`` and
        ``admissible`` variables. Inadmissible exponents are flagged and
        warned about.
    """
    which = Equation(which)
    n, sigma = params.dim, params.sigma
    rows = []

    if which is Equation.FRICTION:
        if sigma < 1:
            raise ValueError(f"Friction rates require sigma >= 1, got {sigma}.")
        base = -n / (4.0 * sigma)
        src = "friction_l1_l2_estimate"
        rows += [
            ("l2_v", base, src, True),
            ("hsigma_v", base - 0.5, src, True),
            ("l2_vt", base - 1.0, src, True),
        ]
        src = "friction_l2_l2_estimate"
        rows += [
            ("l2_v_from_l2", 1.0, src, True),
            ("hsigma_v_from_l2", -0.5, src, True),
            ("l2_vt_from_l2", 0.0, src, True),
        ]
    elif sigma == 1:
        if n < 2:
            raise ValueError(f"The sigma = 1 visco table requires n >= 2, got {n}.")
        if n >= 3:
            rows.append(("l2_u", -n / 4.0 + 0.5, "visco_sigma1_estimate", True))
        else:
            # Growth like log(e + t): polynomial exponent 0.
            rows.append(("l2_u", 0.0, "visco_sigma1_estimate_log", True))
        rows += [
            ("hsigma_u", -n / 4.0, "visco_sigma1_estimate", True),
            ("l2_ut", -n / 4.0, "visco_sigma1_estimate", True),
            ("hess_u", -n / 4.0 - 0.5, "visco_sigma1_estimate", True),
            ("hsigma_u_from_l2", 0.0, "visco_sigma1_l2_estimate", True),
            ("hess_u_from_l2", -0.5, "visco_sigma1_l2_estimate", True),
            ("l2_ut_from_l2", 0.0, "visco_sigma1_l2_estimate", True),
        ]
    else:
        energy_ok = 1.0 <= m <= 2.0
        lp_ok = _visco_admissibility(params, m, alpha1, alpha2)
        rows += [
            (
                "energy_u",
                -(n / (2.0 * sigma)) * (1.0 / m - 0.5),
                "visco_energy_estimate",
                energy_ok,
            ),
            (
                "l_alpha2_u",
                -(n / sigma) * (1.0 / alpha1 - 1.0 / alpha2) + 1.0,
                "visco_lp_estimate",
                lp_ok,
            ),
        ]
        if not (energy_ok and lp_ok):
            warnings.warn(
                f"Inadmissible visco exponents (m={m}, alpha1={alpha1}, alpha2={alpha2}) "
                f"for sigma={sigma}, n={n}; rates flagged.",
                stacklevel=2,
            )

    names, exps, sources, ok = zip(*rows)
    ds = xr.Dataset(
        {
            "predicted_exponent": ("quantity", np.array(exps, dtype=float)),
            "source": ("quantity", np.array(sources, dtype=object)),
            "admissible": ("quantity", np.array(ok, dtype=bool)),
        },
        coords={"quantity": list(names)},
        attrs={
            "equation": which.value,
            "sigma": float(sigma),
            "dim": float(n),
            "m": float(m),
            "alpha1": float(alpha1),
            "alpha2": float(alpha2),
        },
    )
    return update_history(ds, f"Linear decay rates for the {which.value} equation.")
