from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.integrate
import scipy.special
import scipy.stats
import xarray as xr

from xsigma.core import apply_fractional_laplacian, to_physical, to_spectral
from xsigma.criticality import Verdict, classify
from xsigma.grid import Grid, grid_from_dataset
from xsigma.params import ModelParams
from xsigma.utils import conjugate, update_history

_CERTIFICATE_SAMPLES = 100_001
_CERTIFICATE_GAP = 1e-6
_REFINEMENT_GROWTH = 2.0
KEYSTONE_SLOPE_TOL = 0.15
DEFAULT_RADII = (1.0, 2.0, 4.0, 8.0, 16.0)

REPORT_COLUMNS = (
    "R",
    "I1",
    "I2",
    "J1",
    "J2",
    "pairing_u",
    "pairing_v",
    "lhs1",
    "rhs1",
    "lhs2",
    "rhs2",
    "fitted_C1",
    "fitted_C2",
)


@dataclass(frozen=True)
class TimeCutoff:
    """
    Time cutoff eta: 1 on [0, 1/2], 0 on [1, inf), decreasing in between.

    On (1/2, 1), eta(t) = h(2 - 2t) with h the regularized incomplete beta
    function I_s(m, k). For k = 2 this is s^m (m + 1 - m s); k = 3 makes
    eta twice continuously differentiable.

    Parameters
    ----------
    regularity : int
        m, the vanishing order of eta at t = 1.
    smoothness : int, default 2
        Continuous derivatives at t = 1/2 (k = smoothness + 1).
    """

    regularity: int
    smoothness: int = 2

    def __post_init__(self) -> None:
        if self.regularity < 2:
            raise ValueError(f"regularity must be at least 2, got {self.regularity}.")
        if self.smoothness not in (1, 2):
            raise ValueError(f"smoothness must be 1 or 2, got {self.smoothness}.")

    @property
    def _k(self) -> int:
        return self.smoothness + 1

    def _s(self, t: np.ndarray) -> np.ndarray:
        return np.clip(2.0 - 2.0 * np.asarray(t, dtype=float), 0.0, 1.0)

    def __call__(self, t) -> np.ndarray:
        return scipy.special.betainc(self.regularity, self._k, self._s(t))

    def derivative(self, t, order: int = 1) -> np.ndarray:
        """First or second derivative of eta."""
        t = np.asarray(t, dtype=float)
        s = self._s(t)
        m, k = self.regularity, self._k
        norm = scipy.special.beta(m, k)
        inside = (t > 0.5) & (t < 1.0)
        if order == 1:
            h1 = s ** (m - 1) * (1.0 - s) ** (k - 1) / norm
            return np.where(inside, -2.0 * h1, 0.0)
        if order == 2:
            h2 = (
                s ** (m - 2)
                * (1.0 - s) ** (k - 2)
                * ((m - 1) * (1.0 - s) - (k - 1) * s)
                / norm
            )
            return np.where(inside, 4.0 * h2, 0.0)
        raise ValueError(f"order must be 1 or 2, got {order}.")

    def certificate(self, kappa: float, samples: int = _CERTIFICATE_SAMPLES) -> float:
        """
        sup over [1/2, 1 - 1e-6] of eta^(-k'/k) (|eta'|^k' + |eta''|^k').

        Evaluated in log space on ``samples`` points.
        """
        kc = conjugate(kappa)
        t = np.linspace(0.5, 1.0 - _CERTIFICATE_GAP, samples)
        with np.errstate(divide="ignore"):
            log_eta = np.log(self(t))
            log_d1 = kc * np.log(np.abs(self.derivative(t, 1)))
            log_d2 = kc * np.log(np.abs(self.derivative(t, 2)))
        log_terms = -log_eta * kc / kappa + np.logaddexp(log_d1, log_d2)
        with np.errstate(over="ignore"):
            return float(np.exp(np.max(log_terms)))


def build_eta(
    regularity: int = 10,
    kappas: Iterable[float] = (2.0,),
    smoothness: int = 2,
) -> Tuple[TimeCutoff, Dict[float, float]]:
    """
    Build the time cutoff and certify its derivative bound.

    Parameters
    ----------
    regularity : int, default 10
        Vanishing order m at t = 1; must exceed 2 max(kappa').
    kappas : iterable of float, default (2.0,)
        Exponents kappa (p and q of the experiment).
    smoothness : int, default 2
        See :class:`TimeCutoff`.

    Returns
    -------
    tuple
        The cutoff and ``{kappa: certificate}``.
    """
    kappas = tuple(float(k) for k in kappas)
    if not kappas:
        raise ValueError("At least one exponent kappa is required.")
    needed = 2.0 * max(conjugate(k) for k in kappas)
    if not regularity > needed:
        raise ValueError(
            f"regularity={regularity} gives an infinite derivative bound; "
            f"it must exceed {needed:.4g} for kappa in {kappas}."
        )
    eta = TimeCutoff(regularity, smoothness)
    certificates = {k: eta.certificate(k) for k in kappas}
    bad = [k for k, c in certificates.items() if not np.isfinite(c)]
    if bad:
        raise ValueError(f"Derivative bound is not finite for kappa in {bad}.")
    return eta, certificates


def phi_profile(radius, dim: float, sigma_bar: float) -> np.ndarray:
    """<x>^(-n - 2 sigma_bar) = (1 + |x|^2)^(-(n + 2 sigma_bar)/2)."""
    radius = np.asarray(radius, dtype=float)
    return (1.0 + radius**2) ** (-(dim + 2.0 * sigma_bar) / 2.0)


def phi_integral(dim: float, sigma_bar: float) -> float:
    """Integral of <x>^(-n - 2 sigma_bar) over R^n."""
    return float(
        np.pi ** (dim / 2.0)
        * scipy.special.gamma(sigma_bar)
        / scipy.special.gamma(dim / 2.0 + sigma_bar)
    )


@dataclass(frozen=True)
class TestFunctionSet:
    """
    Time cutoff, spatial profile and scaling of Psi_{j,R} = eta_R phi_{j,R}.

    Parameters
    ----------
    sigma_bar : float
        Decay offset in (0, 1) of the spatial profile.
    eta : TimeCutoff
        Time cutoff.
    R : float, default 1.0
        Scaling parameter, R >= 1.
    j : int, default 1
        Spatial scaling exponent, 1 or 2.
    """

    __test__ = False

    sigma_bar: float
    eta: TimeCutoff
    R: float = 1.0
    j: int = 1

    def __post_init__(self) -> None:
        if not 0 < self.sigma_bar < 1:
            raise ValueError(f"sigma_bar must lie in (0, 1), got {self.sigma_bar}.")
        if self.R < 1:
            raise ValueError(f"R must be at least 1, got {self.R}.")
        if self.j not in (1, 2):
            raise ValueError(f"j must be 1 or 2, got {self.j}.")

    @classmethod
    def for_params(cls, params: ModelParams, regularity: int = 10, **kwargs) -> "TestFunctionSet":
        eta, _ = build_eta(regularity, (params.p, params.q))
        return cls(params.sigma_bar, eta, **kwargs)

    def replace(self, **changes) -> "TestFunctionSet":
        return dataclasses.replace(self, **changes)

    def eta_R(self, t, sigma: float, order: int = 0) -> np.ndarray:
        """eta(R^(-2 sigma) t) or its time derivatives."""
        scale = self.R ** (-2.0 * sigma)
        if order == 0:
            return self.eta(scale * np.asarray(t, dtype=float))
        return scale**order * self.eta.derivative(scale * np.asarray(t, dtype=float), order)

    def support_end(self, sigma: float) -> float:
        """R^(2 sigma), where eta_R vanishes."""
        return float(self.R ** (2.0 * sigma))

    def phi(self, grid: Grid, j: Optional[int] = None) -> np.ndarray:
        j = self.j if j is None else j
        return phi_profile(grid.radius / self.R**j, grid.dim, self.sigma_bar)


def build_phi(
    params: ModelParams,
    R: float,
    j: int,
    grid: Grid,
    boundary_tol: Optional[float] = 1e-8,
) -> np.ndarray:
    """
    Sample phi_{j,R}(x) = phi(R^-j x) on a grid.

    Parameters
    ----------
    params : ModelParams
        Supplies n and sigma_bar.
    R : float
        Scaling parameter, R >= 1.
    j : int
        1 or 2.
    grid : Grid
        The grid; its dimension must match ``params``.
    boundary_tol : float or None, default 1e-8
        Largest admissible value at the box boundary; None skips the check.

    Returns
    -------
    np.ndarray
        Samples with shape ``grid.shape``.
    """
    if R < 1:
        raise ValueError(f"R must be at least 1, got {R}.")
    if j not in (1, 2):
        raise ValueError(f"j must be 1 or 2, got {j}.")
    if grid.dim != params.spatial_dim:
        raise ValueError(f"Grid dimension {grid.dim} does not match params.dim={params.dim}.")
    decay = grid.dim + 2.0 * params.sigma_bar
    scale = R**j
    if boundary_tol is not None:
        edge = phi_profile(grid.half_width / scale, grid.dim, params.sigma_bar)
        if edge > boundary_tol:
            required = scale * np.sqrt(boundary_tol ** (-2.0 / decay) - 1.0)
            raise ValueError(
                f"phi_{{{j},R}} with R={R} reaches {float(edge):.3e} at the boundary "
                f"(tolerance {boundary_tol:g}); half_width must be at least {required:.4g}."
            )
    return phi_profile(grid.radius / scale, grid.dim, params.sigma_bar)


@dataclass(frozen=True)
class DecayCertificate:
    """
    Fitted constant C in |(-Delta)^gamma phi| <= C <x>^(-decay) on |x| <= L/2.

    ``refined_constant`` is the same fit on a grid with twice the points;
    ``converged`` is False when it grew by more than a factor of two.
    """

    gamma: float
    branch: str
    decay: float
    constant: float
    refined_constant: Optional[float] = None
    converged: bool = True


def _is_integer(value: float) -> bool:
    return abs(value - round(value)) < 1e-12


def _apply_power(values: np.ndarray, grid: Grid, gamma: float) -> np.ndarray:
    if gamma == 0:
        return np.array(values, dtype=float, copy=True)
    return to_physical(apply_fractional_laplacian(to_spectral(values, grid), gamma))


def _fit_constant(result: np.ndarray, grid: Grid, decay: float) -> float:
    inner = grid.radius <= grid.half_width / 2.0
    bound = (1.0 + grid.radius[inner] ** 2) ** (-decay / 2.0)
    return float(np.max(np.abs(result[inner]) / bound))


def frac_laplacian_phi(
    phi: Union[np.ndarray, Callable[[Grid], np.ndarray]],
    grid: Grid,
    gamma: float,
    sigma_bar: float,
) -> Tuple[np.ndarray, DecayCertificate]:
    """
    Apply (-Delta)^gamma to phi spectrally and fit its decay constant.

    The bound is <x>^(-r - 2 gamma) for integer gamma and <x>^(-n - 2s),
    s = gamma - floor(gamma), otherwise, where r = n + 2 sigma_bar.

    Parameters
    ----------
    phi : np.ndarray or callable
        Samples on ``grid``, or a callable producing samples for any grid.
        Only a callable allows the refinement check.
    grid : Grid
        The grid.
    gamma : float
        Power, gamma >= 0; gamma = 0 returns a copy of phi.
    sigma_bar : float
        Decay offset of phi.

    Returns
    -------
    tuple
        The samples of (-Delta)^gamma phi and the certificate.
    """
    if gamma < 0:
        raise ValueError(f"gamma must be non-negative, got {gamma}.")
    sampler = phi if callable(phi) else None
    values = sampler(grid) if sampler is not None else np.asarray(phi, dtype=float)

    n = grid.dim
    if _is_integer(gamma):
        branch, decay = "integer", n + 2.0 * sigma_bar + 2.0 * gamma
    else:
        s = gamma - np.floor(gamma)
        branch, decay = "fractional", n + 2.0 * s

    result = _apply_power(values, grid, gamma)
    constant = _fit_constant(result, grid, decay)

    refined, converged = None, True
    if sampler is not None:
        fine = Grid(n, 2 * grid.points_per_axis, grid.half_width)
        refined = _fit_constant(_apply_power(sampler(fine), fine, gamma), fine, decay)
        converged = bool(refined <= _REFINEMENT_GROWTH * constant)
        if not converged:
            warnings.warn(
                f"Decay constant for gamma={gamma} grew from {constant:.4g} to "
                f"{refined:.4g} under refinement; the fit is not converged.",
                stacklevel=2,
            )
    return result, DecayCertificate(gamma, branch, decay, constant, refined, converged)


def scaling_identity_error(s: float, R: float, grid: Grid, sigma_bar: float) -> float:
    """
    Relative L^2 gap between (-Delta)^s(psi_R) and R^(-2s) ((-Delta)^s psi)(x/R).

    psi is the spatial profile; the right side is evaluated on the matched
    grid with half-width L/R, so both sides share sample points.
    """
    if not 0 < s < 1:
        raise ValueError(f"s must lie in (0, 1), got {s}.")
    coarse = Grid(grid.dim, grid.points_per_axis, grid.half_width / R)
    psi_R = phi_profile(grid.radius / R, grid.dim, sigma_bar)
    psi = phi_profile(coarse.radius, grid.dim, sigma_bar)
    lhs = _apply_power(psi_R, grid, s)
    rhs = R ** (-2.0 * s) * _apply_power(psi, coarse, s)
    return float(np.linalg.norm(lhs - rhs) / np.linalg.norm(lhs))


@dataclass(frozen=True)
class FunctionalValues:
    """Space-time functionals of one trajectory at one scaling R."""

    R: float
    I1: float
    I2: float
    J1: float
    J2: float
    I_R: float
    J_R: float
    pairing_u: float
    pairing_v: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _require_fields(trajectory: xr.Dataset) -> None:
    missing = [k for k in ("u", "v", "u1", "v1") if k not in trajectory]
    if missing:
        raise ValueError(
            f"Trajectory lacks field snapshots {missing}; integrate with store_fields=True."
        )


def _time_window(trajectory: xr.Dataset, t_end: float) -> np.ndarray:
    times = trajectory["time"].values.astype(float)
    if times[0] > 0 or times[-1] < t_end * (1.0 - 1e-9):
        raise ValueError(
            f"Trajectory covers [{times[0]:.4g}, {times[-1]:.4g}] but [0, {t_end:.4g}] is required."
        )
    last = int(np.searchsorted(times, t_end * (1.0 - 1e-12)))
    return np.arange(min(last + 1, times.size))


def _pair(fields: np.ndarray, weight: np.ndarray, grid: Grid) -> np.ndarray:
    axes = tuple(range(fields.ndim - weight.ndim, fields.ndim))
    return np.sum(fields * weight, axis=axes) * grid.cell_volume


def evaluate_functionals(
    trajectory: xr.Dataset, tfs: TestFunctionSet, params: ModelParams
) -> FunctionalValues:
    """
    I_{j,R}, J_{j,R}, I_R, J_R and the data pairings on a stored trajectory.

    Time integrals use the trapezoid rule on the stored samples with eta_R
    evaluated exactly; space integrals use the rectangle rule.

    Parameters
    ----------
    trajectory : xr.Dataset
        Integration output with field snapshots, covering [0, R^(2 sigma)].
    tfs : TestFunctionSet
        Test functions; ``tfs.R`` selects the scaling.
    params : ModelParams
        Exponents.

    Returns
    -------
    FunctionalValues
    """
    _require_fields(trajectory)
    grid = grid_from_dataset(trajectory)
    idx = _time_window(trajectory, tfs.support_end(params.sigma))
    times = trajectory["time"].values[idx]
    v_pow = np.abs(trajectory["v"].values[idx]) ** params.p
    u_pow = np.abs(trajectory["u"].values[idx]) ** params.q
    eta = tfs.eta_R(times, params.sigma)

    phi1, phi2 = tfs.phi(grid, 1), tfs.phi(grid, 2)
    ones = np.ones(grid.shape)

    def space_time(power: np.ndarray, weight: np.ndarray) -> float:
        return float(scipy.integrate.trapezoid(eta * _pair(power, weight, grid), times))

    return FunctionalValues(
        R=float(tfs.R),
        I1=space_time(v_pow, phi1),
        I2=space_time(v_pow, phi2),
        J1=space_time(u_pow, phi1),
        J2=space_time(u_pow, phi2),
        I_R=space_time(v_pow, ones),
        J_R=space_time(u_pow, ones),
        pairing_u=float(_pair(trajectory["u1"].values, phi2, grid)),
        pairing_v=float(_pair(trajectory["v1"].values, phi1, grid)),
    )


def sweep_radii(trajectory: xr.Dataset, sigma: float, radii: Sequence[float] = DEFAULT_RADII) -> list:
    """Radii whose time support R^(2 sigma) fits inside the trajectory."""
    t_last = float(trajectory["time"].values[-1])
    return [float(R) for R in radii if R ** (2.0 * sigma) <= t_last * (1.0 + 1e-9)]


def keystone_exponents(params: ModelParams) -> Tuple[float, float]:
    """R-exponents -4s + (2n+2s)/q' and -2s + (n+2s)/p' of the two inequalities."""
    n, s = params.dim, params.sigma
    return (
        -4.0 * s + (2.0 * n + 2.0 * s) / params.q_conj,
        -2.0 * s + (n + 2.0 * s) / params.p_conj,
    )


def _log_slope(radii: np.ndarray, values: np.ndarray) -> float:
    if radii.size < 2:
        return float("nan")
    return float(scipy.stats.linregress(np.log(radii), np.log(values)).slope)


def check_keystone_inequalities(
    values: Sequence[FunctionalValues], params: ModelParams
) -> xr.Dataset:
    """
    Fit the implicit constants of the two keystone inequalities over an R sweep.

    I2 + int u1 phi_2R <= C1 J2^(1/q) R^e1 and
    J1 + int v1 phi_1R <= C2 I1^(1/p) R^e2.

    Parameters
    ----------
    values : sequence of FunctionalValues
        At least four radii.
    params : ModelParams
        Exponents.

    Returns
    -------
    xr.Dataset
        Report indexed by R with the report columns. Attributes hold the
        fitted and explicit constants, the predicted exponents, the log-log
        slopes of LHS over the J- or I-factor, ``passed`` and the growth
        trend of LHS/RHS (positive trends signal blow-up).
    """
    if len(values) < 4:
        raise ValueError(f"Keystone checks need at least 4 radii, got {len(values)}.")
    rows = sorted(values, key=lambda v: v.R)
    R = np.array([v.R for v in rows])
    get = lambda name: np.array([getattr(v, name) for v in rows])  # noqa: E731
    I1, I2, J1, J2 = get("I1"), get("I2"), get("J1"), get("J2")
    pairing_u, pairing_v = get("pairing_u"), get("pairing_v")

    e1, e2 = keystone_exponents(params)
    lhs1, lhs2 = I2 + pairing_u, J1 + pairing_v
    base1 = J2 ** (1.0 / params.q) * R**e1
    base2 = I1 ** (1.0 / params.p) * R**e2

    ok1 = (lhs1 > 0) & (base1 > 0)
    ok2 = (lhs2 > 0) & (base2 > 0)
    excluded = int(np.count_nonzero(~ok1) + np.count_nonzero(~ok2))
    if excluded:
        warnings.warn(
            f"{excluded} keystone point(s) with non-positive sides were excluded.",
            stacklevel=2,
        )
    c1 = float(np.max(lhs1[ok1] / base1[ok1])) if ok1.any() else np.nan
    c2 = float(np.max(lhs2[ok2] / base2[ok2])) if ok2.any() else np.nan

    slope1 = _log_slope(R[ok1], lhs1[ok1] / J2[ok1] ** (1.0 / params.q))
    slope2 = _log_slope(R[ok2], lhs2[ok2] / I1[ok2] ** (1.0 / params.p))
    trend1 = _log_slope(R[ok1], lhs1[ok1] / base1[ok1])
    trend2 = _log_slope(R[ok2], lhs2[ok2] / base2[ok2])

    mass = phi_integral(params.dim, params.sigma_bar)
    report = xr.Dataset(
        {
            "I1": ("R", I1),
            "I2": ("R", I2),
            "J1": ("R", J1),
            "J2": ("R", J2),
            "pairing_u": ("R", pairing_u),
            "pairing_v": ("R", pairing_v),
            "lhs1": ("R", lhs1),
            "rhs1": ("R", c1 * base1),
            "lhs2": ("R", lhs2),
            "rhs2": ("R", c2 * base2),
            "fitted_C1": ("R", np.full(R.size, c1)),
            "fitted_C2": ("R", np.full(R.size, c2)),
            "excluded1": ("R", ~ok1),
            "excluded2": ("R", ~ok2),
        },
        coords={"R": R},
    )
    passed = bool(
        ok1.sum() >= 2
        and ok2.sum() >= 2
        and slope1 <= e1 + KEYSTONE_SLOPE_TOL
        and slope2 <= e2 + KEYSTONE_SLOPE_TOL
    )
    report.attrs.update(
        {
            "exponent1": e1,
            "exponent2": e2,
            "slope1": slope1,
            "slope2": slope2,
            "trend1": trend1,
            "trend2": trend2,
            "explicit_C1": mass ** (1.0 / params.q_conj),
            "explicit_C2": mass ** (1.0 / params.p_conj),
            "phi_integral": mass,
            "slope_tolerance": KEYSTONE_SLOPE_TOL,
            "excluded_points": excluded,
            "passed": int(passed),
        }
    )
    update_history(report, f"Keystone inequality sweep over R={R.tolist()} for {params!r}.")
    return report


class UpperLifespanBound(NamedTuple):
    exponent: float
    value: Optional[float]


def upper_lifespan_bound(
    params: ModelParams,
    mass_constant: float = 1.0,
    constant: Optional[float] = None,
    epsilon: Optional[float] = None,
) -> UpperLifespanBound:
    """
    Upper lifespan bound T_eps <= C (eps I0)^(-2 sigma / Gamma_c).

    Parameters
    ----------
    params : ModelParams
        Point on the blow-up side with Gamma_c > 0.
    mass_constant : float, default 1.0
        Data constant I0 from :func:`initial_mass_constant`.
    constant : float, optional
        Fitted C; without it (or ``epsilon``) only the exponent is returned.
    epsilon : float, optional
        Data size.

    Returns
    -------
    UpperLifespanBound
    """
    report = classify(params)
    if report.verdict is not Verdict.BLOW_UP or report.gamma_c <= 0:
        raise ValueError(
            f"No upper lifespan bound for {params!r}: verdict {report.verdict.value}, "
            f"Gamma_c={report.gamma_c:.4g}."
        )
    if not mass_constant > 0:
        raise ValueError(f"mass_constant must be positive, got {mass_constant}.")
    exponent = -2.0 * params.sigma / report.gamma_c
    value = None
    if constant is not None and epsilon is not None:
        value = float(constant * (epsilon * mass_constant) ** exponent)
    return UpperLifespanBound(exponent, value)


class MassConstant(NamedTuple):
    value: float
    positive: bool


def initial_mass_constant(u1: np.ndarray, v1: np.ndarray, grid: Grid) -> MassConstant:
    """
    Half the smaller of the data integrals; blow-up needs both positive.
    """
    mass_u = float(np.sum(u1) * grid.cell_volume)
    mass_v = float(np.sum(v1) * grid.cell_volume)
    positive = mass_u > 0 and mass_v > 0
    if not positive:
        warnings.warn(
            f"Data integrals ({mass_u:.4g}, {mass_v:.4g}) are not both positive.",
            stacklevel=2,
        )
    return MassConstant(0.5 * min(mass_u, mass_v), positive)


class WeakResidual(NamedTuple):
    lhs1: float
    rhs1: float
    lhs2: float
    rhs2: float

    @property
    def relative1(self) -> float:
        return abs(self.lhs1 - self.rhs1) / max(abs(self.lhs1), abs(self.rhs1))

    @property
    def relative2(self) -> float:
        return abs(self.lhs2 - self.rhs2) / max(abs(self.lhs2), abs(self.rhs2))


def _laplacian_snapshots(fields: np.ndarray, grid: Grid, sigma: float) -> np.ndarray:
    return np.stack([_apply_power(f, grid, sigma) for f in fields])


def weak_residual(
    trajectory: xr.Dataset, tfs: TestFunctionSet, params: ModelParams
) -> WeakResidual:
    """
    Both weak-solution relations tested against Psi_{2,R} and Psi_{1,R}.

    int int |v|^p Psi_2 + int u1 phi_2
        = int [eta_R'' <u, phi_2> - eta_R' <L u, phi_2> + eta_R <L u, phi_2>] dt
    int int |u|^q Psi_1 + int v1 phi_1
        = int [eta_R'' <v, phi_1> - eta_R' <v, phi_1> + eta_R <L v, phi_1>] dt

    with L = (-Delta)^sigma moved onto the solution. Time integrals use
    Simpson's rule on the stored samples.
    """
    _require_fields(trajectory)
    grid = grid_from_dataset(trajectory)
    sigma = params.sigma
    idx = _time_window(trajectory, tfs.support_end(sigma))
    times = trajectory["time"].values[idx]
    u = trajectory["u"].values[idx]
    v = trajectory["v"].values[idx]
    phi1, phi2 = tfs.phi(grid, 1), tfs.phi(grid, 2)
    eta0, eta1, eta2 = (tfs.eta_R(times, sigma, order) for order in (0, 1, 2))

    def integral(values: np.ndarray) -> float:
        return float(scipy.integrate.simpson(values, x=times))

    lu_phi2 = _pair(_laplacian_snapshots(u, grid, sigma), phi2, grid)
    lv_phi1 = _pair(_laplacian_snapshots(v, grid, sigma), phi1, grid)
    u_phi2 = _pair(u, phi2, grid)
    v_phi1 = _pair(v, phi1, grid)

    lhs1 = integral(eta0 * _pair(np.abs(v) ** params.p, phi2, grid)) + float(
        _pair(trajectory["u1"].values, phi2, grid)
    )
    rhs1 = integral(eta2 * u_phi2 - eta1 * lu_phi2 + eta0 * lu_phi2)
    lhs2 = integral(eta0 * _pair(np.abs(u) ** params.q, phi1, grid)) + float(
        _pair(trajectory["v1"].values, phi1, grid)
    )
    rhs2 = integral(eta2 * v_phi1 - eta1 * v_phi1 + eta0 * lv_phi1)
    return WeakResidual(lhs1, rhs1, lhs2, rhs2)


__all__ = [
    "TimeCutoff",
    "TestFunctionSet",
    "FunctionalValues",
    "DecayCertificate",
    "UpperLifespanBound",
    "MassConstant",
    "WeakResidual",
    "build_eta",
    "phi_profile",
    "phi_integral",
    "build_phi",
    "frac_laplacian_phi",
    "scaling_identity_error",
    "evaluate_functionals",
    "sweep_radii",
    "keystone_exponents",
    "check_keystone_inequalities",
    "upper_lifespan_bound",
    "initial_mass_constant",
    "weak_residual",
]
