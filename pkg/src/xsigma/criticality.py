from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import xarray as xr

from xsigma.params import ModelParams
from xsigma.utils import positive_part, update_history

CRITICAL_TOL = 1e-12


class Verdict(str, Enum):
    GLOBAL_EXISTENCE = "global_existence"
    BLOW_UP = "blow_up"
    CRITICAL = "critical"
    OUTSIDE_THEORY = "outside_theory"


VERDICT_CODES = {
    Verdict.GLOBAL_EXISTENCE: 0,
    Verdict.BLOW_UP: 1,
    Verdict.CRITICAL: 2,
    Verdict.OUTSIDE_THEORY: 3,
}
_CODE_TO_VERDICT = {code: verdict for verdict, code in VERDICT_CODES.items()}


class Curve(str, Enum):
    """The two critical curves of the p-q plane."""

    CURVE1 = "curve1"  # q = 2(n + sigma) / (n(p + 1) - 4 sigma)
    CURVE2 = "curve2"  # q = (p + 1)(n + 2 sigma) / (2p(n - sigma))


class LossOfDecay(NamedTuple):
    eps1: float
    eps2: float
    eps1_plus: float
    eps2_plus: float


@dataclass(frozen=True)
class CriticalityReport:
    """
    Classification of one point (sigma, n, p, q).

    Attributes
    ----------
    ratio1, ratio2 : float
        (2q+1)/(pq+q-2) and (pq+p+1)/(2pq-p-1).
    scale : float
        n / (2 sigma).
    gamma_c : float
        Blow-up exponent aggregate; positive exactly on the blow-up side.
    verdict : Verdict
        Which result applies.
    asymptotes : dict
        p_crit, q_crit, p0, q0 (q values are None for n <= sigma).
    loss : LossOfDecay
        Loss-of-decay exponents and their positive parts.
    """

    ratio1: float
    ratio2: float
    scale: float
    gamma_c: float
    verdict: Verdict
    asymptotes: Dict[str, Optional[float]] = field(default_factory=dict)
    loss: Optional[LossOfDecay] = None

    @property
    def max_ratio(self) -> float:
        return max(self.ratio1, self.ratio2)


def _ratios(p, q) -> Tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    ratio1 = (2.0 * q + 1.0) / (p * q + q - 2.0)
    ratio2 = (p * q + p + 1.0) / (2.0 * p * q - p - 1.0)
    return ratio1, ratio2


def gamma_c_values(sigma, n, p, q) -> np.ndarray:
    """
    Vectorized Gamma_c over broadcastable (sigma, n, p, q).

    (pq/(pq-1)) max{2s + 4s/p - (2n+2s)/(pq') - (n+2s)/p',
                    4s + 2s/q - (2n+2s)/q' - (n+2s)/(p'q)}  with s = sigma.
    """
    sigma, n, p, q = (np.asarray(x, dtype=float) for x in (sigma, n, p, q))
    if np.any(p <= 1) or np.any(q <= 1):
        raise ValueError("Gamma_c requires p > 1 and q > 1.")
    p_conj = p / (p - 1.0)
    q_conj = q / (q - 1.0)
    first = (
        2.0 * sigma
        + 4.0 * sigma / p
        - (2.0 * n + 2.0 * sigma) / (p * q_conj)
        - (n + 2.0 * sigma) / p_conj
    )
    second = (
        4.0 * sigma
        + 2.0 * sigma / q
        - (2.0 * n + 2.0 * sigma) / q_conj
        - (n + 2.0 * sigma) / (p_conj * q)
    )
    pq = p * q
    return pq / (pq - 1.0) * np.maximum(first, second)


def gamma_c(params: ModelParams) -> float:
    """
    Blow-up exponent aggregate Gamma_c(p, q).

    Parameters
    ----------
    params : ModelParams
        The point (sigma, n, p, q).

    Returns
    -------
    float
        Gamma_c; its sign matches sign(max(ratio1, ratio2) - n/(2 sigma)).
    """
    return float(gamma_c_values(params.sigma, params.dim, params.p, params.q))


def _verdict_codes(sigma, n, p, q) -> np.ndarray:
    sigma, n, p, q = np.broadcast_arrays(
        *(np.asarray(x, dtype=float) for x in (sigma, n, p, q))
    )
    ratio1, ratio2 = _ratios(p, q)
    top = np.maximum(ratio1, ratio2)
    scale = n / (2.0 * sigma)

    small_dim = n <= sigma
    critical = ~small_dim & (np.abs(top - scale) <= CRITICAL_TOL)
    # The blow-up result needs sigma >= 1.
    blow_up = (small_dim | (top > scale)) & ~critical & (sigma >= 1.0)
    global_ok = (
        ~small_dim
        & ~critical
        & (top < scale)
        & (p >= 2.0)
        & (sigma > 1.0)
        & (n < 2.0 * sigma)
    )
    codes = np.full(top.shape, VERDICT_CODES[Verdict.OUTSIDE_THEORY], dtype=np.int8)
    codes[global_ok] = VERDICT_CODES[Verdict.GLOBAL_EXISTENCE]
    codes[blow_up] = VERDICT_CODES[Verdict.BLOW_UP]
    codes[critical] = VERDICT_CODES[Verdict.CRITICAL]
    return codes


def loss_of_decay(params: ModelParams) -> LossOfDecay:
    """
    Loss-of-decay exponents and their positive parts.

    eps1 = 1 - (n/(2 sigma))(p - 1) + eps and
    eps2 = 1 + q - (n/sigma)(q - 1) + eps.
    """
    n, sigma, eps = params.dim, params.sigma, params.eps_slack
    eps1 = 1.0 - n / (2.0 * sigma) * (params.p - 1.0) + eps
    eps2 = 1.0 + params.q - n / sigma * (params.q - 1.0) + eps
    return LossOfDecay(
        eps1, eps2, float(positive_part(eps1)), float(positive_part(eps2))
    )


def _asymptotes(params: ModelParams) -> Dict[str, Optional[float]]:
    return {
        "p_crit": params.p_crit,
        "q_crit": params.q_crit,
        "p0": params.p0,
        "q0": params.q0,
    }


def classify(params: ModelParams) -> CriticalityReport:
    """
    Decide which result covers the point (sigma, n, p, q).

    Blow-up when n <= sigma or max(ratio1, ratio2) > n/(2 sigma) (with
    sigma >= 1); global existence when the maximum is below n/(2 sigma),
    p >= 2 and 1 < sigma < n < 2 sigma; critical on the curve itself;
    otherwise outside the theory.

    Parameters
    ----------
    params : ModelParams
        The point.

    Returns
    -------
    CriticalityReport
        Ratios, Gamma_c, verdict, asymptotes and loss-of-decay exponents.
    """
    ratio1, ratio2 = _ratios(params.p, params.q)
    # p, q > 1 keeps every denominator positive.
    assert params.p * params.q + params.q - 2.0 > 0
    assert 2.0 * params.p * params.q - params.p - 1.0 > 0
    code = int(_verdict_codes(params.sigma, params.dim, params.p, params.q))
    return CriticalityReport(
        ratio1=float(ratio1),
        ratio2=float(ratio2),
        scale=params.scale,
        gamma_c=gamma_c(params),
        verdict=_CODE_TO_VERDICT[code],
        asymptotes=_asymptotes(params),
        loss=loss_of_decay(params),
    )


def _curve_values(curve: Curve, sigma, n, p) -> np.ndarray:
    sigma, n, p = (np.asarray(x, dtype=float) for x in (sigma, n, p))
    with np.errstate(divide="ignore", invalid="ignore"):
        if curve is Curve.CURVE1:
            denom = n * (p + 1.0) - 4.0 * sigma
            return np.where(denom > 0, 2.0 * (n + sigma) / denom, np.nan)
        if np.any(n <= sigma):
            return np.full(np.broadcast(sigma, n, p).shape, np.nan)
        return (p + 1.0) * (n + 2.0 * sigma) / (2.0 * p * (n - sigma))


def curve_q_of_p(
    params: ModelParams, which: Union[Curve, str], p: Optional[float] = None
) -> Optional[float]:
    """
    q on a critical curve at a given p.

    Parameters
    ----------
    params : ModelParams
        Supplies sigma and n, and p when ``p`` is omitted.
    which : Curve
        CURVE1 or CURVE2.
    p : float, optional
        Abscissa; defaults to ``params.p``.

    Returns
    -------
    float or None
        None when p is at or left of the vertical asymptote (CURVE1) or
        n <= sigma (CURVE2).
    """
    which = Curve(which)
    p = params.p if p is None else p
    value = float(_curve_values(which, params.sigma, params.dim, p))
    return None if np.isnan(value) else value


@dataclass(frozen=True)
class DecayRateTable:
    """
    Predicted decay exponents of the small-data global solution.

    ``rates`` is keyed by trajectory variable names; ``weights`` holds the
    exponents of the solution-space weights f1..f3, g1..g3.
    """

    rates: Dict[str, float]
    weights: Dict[str, float]
    loss: LossOfDecay

    def to_dataset(self) -> xr.Dataset:
        names = list(self.rates)
        ds = xr.Dataset(
            {"predicted_exponent": ("quantity", np.array([self.rates[k] for k in names]))},
            coords={"quantity": names},
            attrs={f"weight_{k}": v for k, v in self.weights.items()},
        )
        ds.attrs.update(self.loss._asdict())
        return ds


# Variables weighted by each solution-space weight.
WEIGHT_QUANTITIES = {
    "f1": ("lq_u",),
    "f2": ("linf_u",),
    "f3": ("hsigma_u", "l2_ut"),
    "g1": ("l2_v",),
    "g2": ("hsigma_v",),
    "g3": ("l2_vt",),
}


def decay_rate_table(params: ModelParams) -> DecayRateTable:
    """
    Decay exponents of the global small-data solution.

    Parameters
    ----------
    params : ModelParams
        Point in the global-existence region.

    Returns
    -------
    DecayRateTable
        Seven norm exponents, each shifted by the positive part of the
        relevant loss-of-decay exponent, and the matching weights.
    """
    report = classify(params)
    if report.verdict is not Verdict.GLOBAL_EXISTENCE:
        raise ValueError(
            f"Decay rates are only available in the global-existence region; "
            f"{params!r} is classified as {report.verdict.value}."
        )
    n, sigma, q = params.dim, params.sigma, params.q
    loss = report.loss
    shift_u, shift_v = loss.eps1_plus, loss.eps2_plus
    base = -n / (4.0 * sigma)
    rates = {
        "lq_u": 1.0 - n / sigma * (1.0 - 1.0 / q) + shift_u,
        "linf_u": 1.0 - n / sigma + shift_u,
        "hsigma_u": base + shift_u,
        "l2_ut": base + shift_u,
        "l2_v": base + shift_v,
        "hsigma_v": base - 0.5 + shift_v,
        "l2_vt": -n / (2.0 * sigma) + shift_v,
    }
    weights = {name: rates[qs[0]] for name, qs in WEIGHT_QUANTITIES.items()}
    return DecayRateTable(rates, weights, loss)


def solution_space_norm(trajectory: xr.Dataset, table: DecayRateTable) -> xr.DataArray:
    """
    Running weighted norm of a trajectory in the global solution space.

    Each tracked norm is divided by (1 + t)^rate and the weighted norms are
    summed; the running maximum over time is returned.

    Parameters
    ----------
    trajectory : xr.Dataset
        Output of an integration.
    table : DecayRateTable
        Predicted exponents.

    Returns
    -------
    xr.DataArray
        sup_{tau <= t} of the weighted sum, indexed by time.
    """
    t = trajectory["time"]
    total = xr.zeros_like(t, dtype=float)
    for name, quantities in WEIGHT_QUANTITIES.items():
        weight = (1.0 + t) ** table.weights[name]
        for quantity in quantities:
            total = total + trajectory[quantity] / weight
    running = np.maximum.accumulate(total.values)
    out = xr.DataArray(running, coords={"time": t.values}, dims="time", name="solution_norm")
    return out


@dataclass(frozen=True)
class Sigma1Report:
    """Sufficient condition for sigma = 1 and its comparison flags."""

    holds: bool
    admissible: bool
    value: float
    threshold: float
    exceeds_ratio1: bool
    exceeds_ratio2: bool

    def __bool__(self) -> bool:
        return self.holds


def sigma1_condition(p: float, q: float, n: float) -> Sigma1Report:
    """
    max{(3q/2 + 1)/(pq - 1), (pq/2 + p + 1)/(pq - 1)} < n/2.

    Parameters
    ----------
    p, q : float
        Exponents.
    n : float
        Dimension, n >= 3.

    Returns
    -------
    Sigma1Report
        Truthy when the condition holds. ``admissible`` records the ranges
        2 <= p <= n/(n-2) and 2 <= q (< inf for n = 3, 4, <= n/(n-4) for
        n > 4); the flags compare each term with its sigma = 1 counterpart.
    """
    if p <= 1 or q <= 1:
        raise ValueError(f"p and q must exceed 1, got p={p}, q={q}.")
    pq = p * q
    term1 = (1.5 * q + 1.0) / (pq - 1.0)
    term2 = (0.5 * pq + p + 1.0) / (pq - 1.0)
    ratio1, ratio2 = _ratios(p, q)

    admissible = n >= 3 and 2.0 <= p <= n / (n - 2.0) and q >= 2.0
    if admissible and n > 4:
        admissible = q <= n / (n - 4.0)
    if not admissible:
        warnings.warn(
            f"(p, q, n) = ({p}, {q}, {n}) is outside the admissible sigma = 1 range.",
            stacklevel=2,
        )
    value = max(term1, term2)
    return Sigma1Report(
        holds=bool(value < n / 2.0),
        admissible=bool(admissible),
        value=float(value),
        threshold=n / 2.0,
        exceeds_ratio1=bool(term1 > ratio1),
        exceeds_ratio2=bool(term2 > ratio2),
    )


def lifespan_exponent(params: ModelParams) -> Optional[float]:
    """-2 sigma / Gamma_c on the blow-up side, None elsewhere."""
    report = classify(params)
    if report.verdict is not Verdict.BLOW_UP or report.gamma_c <= 0:
        return None
    return -2.0 * params.sigma / report.gamma_c


def lower_bound_exponent(params: ModelParams) -> float:
    """
    Exponent of the lower lifespan bound T >= c eps^(-value).

    value = (pq - 1) / max(D1, D2) with
    D1 = 1 - (n/2s)(p - 1) + p(1 + q - (n/s)(q - 1)) and
    D2 = 1 + 2q - (n/s)(q - 1) - (n q / 2s)(p - 1); it coincides with
    2 sigma / Gamma_c.
    """
    n, s, p, q = params.dim, params.sigma, params.p, params.q
    d1 = 1.0 - n / (2.0 * s) * (p - 1.0) + p * (1.0 + q - n / s * (q - 1.0))
    d2 = 1.0 + 2.0 * q - n / s * (q - 1.0) - n * q / (2.0 * s) * (p - 1.0)
    top = max(d1, d2)
    if top <= 0:
        raise ValueError(f"No finite lifespan bound for {params!r}.")
    return (p * q - 1.0) / top


def region_regime(sigma: float, n: float) -> Optional[str]:
    """
    ``"upper"`` for 4 sigma/3 < n < 2 sigma, ``"lower"`` for
    sigma < n <= 4 sigma/3, None otherwise.
    """
    if 4.0 * sigma / 3.0 < n < 2.0 * sigma:
        return "upper"
    if sigma < n <= 4.0 * sigma / 3.0:
        return "lower"
    return None


class RegionMap(NamedTuple):
    region: xr.Dataset
    curves: xr.Dataset
    constants: xr.Dataset


def _region_fields(sigma, n, p, q):
    ratio1, ratio2 = _ratios(p, q)
    gc = gamma_c_values(sigma, n, p, q)
    codes = _verdict_codes(sigma, n, p, q)
    with np.errstate(divide="ignore"):
        life = np.where(
            (codes == VERDICT_CODES[Verdict.BLOW_UP]) & (gc > 0), -2.0 * sigma / gc, np.nan
        )
    return np.stack([codes.astype(float), ratio1, ratio2, gc, life], axis=-1)


def emit_region_map(
    params: ModelParams,
    p_range: Tuple[float, float] = (1.05, 12.0),
    q_range: Tuple[float, float] = (1.05, 12.0),
    num: Union[int, Tuple[int, int]] = 200,
    p_values: Optional[Sequence[float]] = None,
    q_values: Optional[Sequence[float]] = None,
    chunks: Optional[int] = None,
) -> RegionMap:
    """
    Verdicts, ratios, Gamma_c and lifespan exponents over a (p, q) grid.

    Parameters
    ----------
    params : ModelParams
        Supplies sigma and n; p and q are ignored.
    p_range, q_range : tuple of float
        Sampled intervals, both above 1.
    num : int or tuple of int, default 200
        Samples per axis.
    p_values, q_values : sequence of float, optional
        Explicit samples overriding the ranges.
    chunks : int, optional
        Evaluate lazily with dask in chunks of this size along p.

    Returns
    -------
    RegionMap
        ``region`` (dims p, q), ``curves`` (one row per traced point) and
        ``constants`` (asymptotes).
    """
    n_p, n_q = (num, num) if isinstance(num, int) else num
    p = np.asarray(p_values if p_values is not None else np.linspace(*p_range, n_p), dtype=float)
    q = np.asarray(q_values if q_values is not None else np.linspace(*q_range, n_q), dtype=float)
    if np.any(p <= 1) or np.any(q <= 1):
        raise ValueError("Region maps require p > 1 and q > 1.")

    sigma, n = params.sigma, params.dim
    p_da = xr.DataArray(p, dims="p", coords={"p": p})
    q_da = xr.DataArray(q, dims="q", coords={"q": q})
    if chunks is not None:
        p_da = p_da.chunk({"p": chunks})
    fields = xr.apply_ufunc(
        _region_fields,
        sigma,
        n,
        p_da,
        q_da,
        output_core_dims=[["field"]],
        dask="parallelized",
        output_dtypes=[float],
        dask_gufunc_kwargs={"output_sizes": {"field": 5}},
    ).transpose("p", "q", "field")
    fields = fields.compute()

    codes = fields.isel(field=0).astype(np.int8)
    region = xr.Dataset(
        {
            "verdict_code": codes,
            "verdict": codes.copy(
                data=np.vectorize(lambda c: _CODE_TO_VERDICT[int(c)].value, otypes=[object])(
                    codes.values
                )
            ),
            "ratio1": fields.isel(field=1),
            "ratio2": fields.isel(field=2),
            "gamma_c": fields.isel(field=3),
            "lifespan_exponent": fields.isel(field=4),
        }
    )
    region["verdict_code"].attrs.update(
        {
            "flag_values": list(VERDICT_CODES.values()),
            "flag_meanings": " ".join(v.value for v in VERDICT_CODES),
        }
    )
    region.attrs.update({"sigma": float(sigma), "dim": float(n), "regime": str(region_regime(sigma, n))})
    update_history(region, f"Region map for sigma={sigma}, n={n}.")

    curves = _curve_traces(params, p)
    named = dict(_asymptotes(params), sigma=sigma, dim=n)
    constants = xr.Dataset(
        {"value": ("name", [np.nan if v is None else float(v) for v in named.values()])},
        coords={"name": list(named)},
    )
    return RegionMap(region, curves, constants)


def _curve_traces(params: ModelParams, p: np.ndarray) -> xr.Dataset:
    samples = np.sort(np.unique(np.append(p, params.p_crit)))
    ids, ps, qs = [], [], []
    for curve in Curve:
        values = _curve_values(curve, params.sigma, params.dim, samples)
        keep = np.isfinite(values)
        ids += [curve.value] * int(keep.sum())
        ps.append(samples[keep])
        qs.append(values[keep])
    return xr.Dataset(
        {
            "curve_id": ("point", np.array(ids, dtype=object)),
            "p": ("point", np.concatenate(ps)),
            "q": ("point", np.concatenate(qs)),
        }
    )
