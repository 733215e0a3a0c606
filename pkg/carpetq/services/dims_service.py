"""Closed forms and root solvers for the dimension-like quantities of a carpet.

All implicit equations are solved in the transformed variable u = s/(s+r),
which lives in (0, 1) and makes the defining functions strictly decreasing.
"""
import logging
import math
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..config import get_settings
from ..errors import InvalidParam, InvalidR, NoBracket, NoSignChange
from ..models.carpet import DerivedQuantities
from ..models.reports import ConditionRow, DimReport, SpectrumRow, SpectrumTable, ThetaRow
from .root_finding import bisect_decreasing

logger = logging.getLogger(__name__)


def _row_power_sums(carpet: DerivedQuantities, t: float) -> np.ndarray:
    """sum_{i in G_{x,j}} p_ij^t for every row j."""
    return np.bincount(carpet.row, weights=carpet.p ** t, minlength=len(carpet.Gy))


def s0(carpet: DerivedQuantities) -> float:
    theta = carpet.theta
    plogp = float(np.sum(carpet.p * np.log(carpet.p)))
    qlogq = float(np.sum(carpet.q * np.log(carpet.q)))
    return (theta * plogp + (1.0 - theta) * qlogq) / (-carpet.log_m)


def main_equation(carpet: DerivedQuantities, r: float, u: float) -> float:
    """F(u) = -r u log m + theta log sum p^u + (1-theta) log sum q^u."""
    theta = carpet.theta
    return (
        -r * u * carpet.log_m
        + theta * math.log(float(np.sum(carpet.p ** u)))
        + (1.0 - theta) * math.log(float(np.sum(carpet.q ** u)))
    )


def conformal_equation(carpet: DerivedQuantities, r: float, v: float) -> float:
    """G(v) = -r v log m + log sum_j q_j^{(1-theta) v} (sum_i p_ij^v)^theta."""
    theta = carpet.theta
    inner = _row_power_sums(carpet, v)
    total = float(np.sum(carpet.q ** ((1.0 - theta) * v) * inner ** theta))
    return -r * v * carpet.log_m + math.log(total)


def _check_r(r: float) -> None:
    if not (r > 0) or not math.isfinite(r):
        raise InvalidR("r must be positive; use s0 for r = 0", {"r": r})


def solve_kappa(carpet: DerivedQuantities, r: float, tol: Optional[float] = None) -> float:
    _check_r(r)
    tol = tol if tol is not None else get_settings().solver_tol
    return bisect_decreasing(lambda u: main_equation(carpet, r, u), 0.0, 1.0, tol, name="F")


def solve_sr(carpet: DerivedQuantities, r: float, tol: Optional[float] = None) -> float:
    u = solve_kappa(carpet, r, tol)
    return r * u / (1.0 - u)


def solve_tr(carpet: DerivedQuantities, r: float, tol: Optional[float] = None) -> float:
    _check_r(r)
    tol = tol if tol is not None else get_settings().solver_tol
    v = bisect_decreasing(lambda v: conformal_equation(carpet, r, v), 0.0, 1.0, tol, name="G")
    return r * v / (1.0 - v)


def temperature(carpet: DerivedQuantities, t: float) -> float:
    """T(t) = log_m sum_j q_j^{(1-theta) t} (sum_i p_ij^t)^theta.

    This is the closed form of the implicit definition once m^{-T} is
    factored out of the sum over digits.
    """
    theta = carpet.theta
    inner = _row_power_sums(carpet, t)
    total = float(np.sum(carpet.q ** ((1.0 - theta) * t) * inner ** theta))
    return math.log(total) / carpet.log_m


def solve_theta_r(carpet: DerivedQuantities, r: float, tol: Optional[float] = None) -> float:
    """Root of T(t) - r t; theta_0 = 1 since T(1) = 0."""
    if r < 0 or not math.isfinite(r):
        raise InvalidR("r must be non-negative", {"r": r})
    if r == 0:
        return 1.0
    tol = tol if tol is not None else get_settings().solver_tol

    def h(t: float) -> float:
        return temperature(carpet, t) - r * t

    hi = 1.0
    tried = [hi]
    while h(hi) >= 0:
        hi *= 2.0
        tried.append(hi)
        if hi > 1e6:
            raise NoSignChange("T(t) - r t never became negative", {"r": r, "tried": tried})
    try:
        return bisect_decreasing(h, 0.0, hi, tol, name="H")
    except NoBracket as e:
        raise NoSignChange("T(t) - r t has no sign change", {"r": r, "bracket": (0.0, hi)}) from e


def conformal_dimension(carpet: DerivedQuantities, r: float) -> float:
    """T(theta_r) / (1 - theta_r), which coincides with t_r."""
    theta_r = solve_theta_r(carpet, r)
    return temperature(carpet, theta_r) / (1.0 - theta_r)


def spectrum(
    carpet: DerivedQuantities,
    t_grid: Sequence[float],
    r_list: Iterable[float] = (),
    diff_step: Optional[float] = None,
) -> SpectrumTable:
    """T on the grid, alpha = -T' by central differences, f = alpha t + T.

    f is not truncated at zero.
    """
    h = diff_step if diff_step is not None else get_settings().diff_step
    rows = []
    for t in t_grid:
        t = float(t)
        T = temperature(carpet, t)
        alpha = -(temperature(carpet, t + h) - temperature(carpet, t - h)) / (2.0 * h)
        rows.append(SpectrumRow(t=t, T=T, alpha=alpha, f=alpha * t + T))

    theta_rows = []
    for r in r_list:
        r = float(r)
        try:
            th = solve_theta_r(carpet, r)
            identity = None if r == 0 else temperature(carpet, th) / (1.0 - th)
            theta_rows.append(ThetaRow(r=r, theta_r=th, identity=identity))
        except NoSignChange as e:
            logger.warning("theta_r failed for r=%s: %s", r, e)
            theta_rows.append(ThetaRow(r=r, theta_r=None, identity=None, error=str(e)))
    return SpectrumTable(rows=tuple(rows), theta_rows=tuple(theta_rows))


def _flag(values: Sequence[float], tol: float) -> bool:
    return (max(values) - min(values)) < tol


def condition_report(carpet: DerivedQuantities, r: float, tol: Optional[float] = None) -> DimReport:
    """Row constants behind the three sufficient conditions for exact rate."""
    if r < 0 or not math.isfinite(r):
        raise InvalidR("r must be non-negative", {"r": r})
    tol = tol if tol is not None else get_settings().tol
    base = s0(carpet)

    ratio = carpet.p / carpet.q[carpet.row]
    c_j = np.bincount(carpet.row, weights=ratio * np.log(ratio), minlength=len(carpet.Gy))

    if r > 0:
        sr = solve_sr(carpet, r)
        tr = solve_tr(carpet, r)
        u = sr / (sr + r)
        c_jr = carpet.q ** (-u) * _row_power_sums(carpet, u)
        cond_a: Optional[bool] = _flag(c_jr.tolist(), tol)
        pi_r = float(np.mean(c_jr)) if cond_a else None
        kappa = u
    else:
        sr = tr = base
        c_jr = None
        cond_a = None
        pi_r = None
        kappa = 1.0

    rows = tuple(
        ConditionRow(
            j=carpet.Gy[b],
            q=float(carpet.q[b]),
            c_jr=None if c_jr is None else float(c_jr[b]),
            c_j=float(c_j[b]),
        )
        for b in range(len(carpet.Gy))
    )
    return DimReport(
        r=r,
        s0=base,
        sr=sr,
        tr=tr,
        kappa=kappa,
        rows=rows,
        condition_a=cond_a,
        condition_b=_flag(c_j.tolist(), tol),
        condition_c=len(set(carpet.q_exact)) == 1 or _flag(carpet.q.tolist(), tol),
        pi_r=pi_r,
        tol=tol,
    )


# --- series and level sums behind kappa_r ------------------------------------------


def series_ratio(carpet: DerivedQuantities, r: float, t: float) -> float:
    """C(t) = m^{-rt} (sum p^t)^theta (sum q^t)^{1-theta}; equals 1 at kappa_r."""
    return math.exp(main_equation(carpet, r, t))


def level_sum(carpet: DerivedQuantities, r: float, k: int, t: float) -> float:
    """sum over Omega_k of (mu_sigma m^{-kr})^t, in closed form."""
    l = carpet.ell(k)
    log_total = (
        -k * r * t * carpet.log_m
        + l * math.log(float(np.sum(carpet.p ** t)))
        + (k - l) * math.log(float(np.sum(carpet.q ** t)))
    )
    return math.exp(log_total)


def level_sum_floor(carpet: DerivedQuantities, r: float) -> Tuple[float, float, float]:
    """(P_r, Q_r, Q_r / P_r); every level sum at kappa_r stays above Q_r / P_r."""
    kappa = solve_kappa(carpet, r)
    scale = carpet.m ** (-r)
    P = float(np.sum((carpet.p * scale) ** kappa))
    Q = float(np.sum((carpet.q * scale) ** kappa))
    return P, Q, Q / P


def entropy_Ik(carpet: DerivedQuantities, k: int) -> float:
    """I_k = sum over Omega_k of mu log mu = l(k) sum p log p + (k - l(k)) sum q log q."""
    if k < 1:
        raise InvalidParam("k must be at least 1", {"k": k})
    l = carpet.ell(k)
    plogp = float(np.sum(carpet.p * np.log(carpet.p)))
    qlogq = float(np.sum(carpet.q * np.log(carpet.q)))
    return l * plogp + (k - l) * qlogq


def mean_exponent_sk0(carpet: DerivedQuantities, k: int) -> float:
    return entropy_Ik(carpet, k) / (-k * carpet.log_m)


def chi_constant(carpet: DerivedQuantities) -> float:
    """chi with |s_{k,0} - s0| <= chi / k."""
    plogp = float(np.sum(np.abs(carpet.p * np.log(carpet.p))))
    qlogq = float(np.sum(np.abs(carpet.q * np.log(carpet.q))))
    return (plogp + qlogq) / carpet.log_m


def dims_rows(carpet: DerivedQuantities, r_list: Iterable[float], tol: Optional[float] = None) -> List[DimReport]:
    return [condition_report(carpet, float(r), tol) for r in r_list]
