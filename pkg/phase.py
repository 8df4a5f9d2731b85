"""
Asymptotic phase calculus of threshold feature selection.

Thresholds are parameterized as t_q(p) = sqrt(2 q log p). Along such a
threshold the useful-feature discovery exponent is delta(q) and the
separation exponent is gamma(q) = min(gamma_1, gamma_2); the success
boundary, the region split and the FDR/Lfdr limits all follow from them.
"""

import logging
import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from distributions import ArrayLike, ArwParams, ThresholdKind
from errors import InvalidParamsError, OutOfRangeError
from hc import hct_ideal
from ideal import err_proxy
from search import bisect_crossing

logger = logging.getLogger("hctlab.phase")

PHASE_COLUMNS = ["beta", "r", "region", "q_star", "fdr_limit", "lfdr_limit", "elevation_ratio",
                 "sep_exponent_ideal", "sep_exponent_fdrt", "sep_exponent_bonf"]
EXPONENT_COLUMNS = ["beta", "r", "ideal", "hct", "fdrt", "bonferroni"]
BOUNDARY_COLUMNS = ["p", "n", "level", "beta", "r", "status"]


class Region(Enum):
    FAIL = "Fail"
    I = "I"
    II = "II"
    III = "III"


class Method(Enum):
    IDEAL = "ideal"
    HCT = "hct"
    FDRT = "fdrt"
    BONFERRONI = "bonferroni"


@dataclass(frozen=True)
class PhasePoint:
    beta: float
    r: float
    region: Region
    q_star: float
    fdr_limit: float
    lfdr_limit: float
    sep_exponent_ideal: float
    sep_exponent_fdrt: float
    sep_exponent_bonf: float

    @property
    def elevation_ratio(self) -> float:
        """Ideal threshold over feature strength, sqrt(q*/r)."""
        return math.sqrt(self.q_star / self.r)

    def to_dict(self) -> dict:
        row = asdict(self)
        row["region"] = self.region.value
        row["elevation_ratio"] = self.elevation_ratio
        return {column: row[column] for column in PHASE_COLUMNS}


def _check_unit(name: str, value: float) -> None:
    if not 0.0 < value < 1.0:
        raise InvalidParamsError(f"{name} must lie in (0, 1)", details={name: value})


# ==================== Exponents ====================

def rho_star(beta: float) -> float:
    """Boundary of the success region: smallest r at which ideal thresholding succeeds."""
    _check_unit("beta", beta)
    if beta <= 0.5:
        return 0.0
    if beta <= 0.75:
        return beta - 0.5
    return (1.0 - math.sqrt(1.0 - beta)) ** 2


def delta_exponent(q: ArrayLike, beta: float, r: float) -> ArrayLike:
    """Exponent of the fraction of useful features discovered at t_q(p), relative to p."""
    q = np.asarray(q, dtype=float)
    if np.any(q < 0):
        raise InvalidParamsError("q must be nonnegative")
    excess = np.where(q > r, (np.sqrt(q) - math.sqrt(r)) ** 2, 0.0)
    value = 1.0 - beta - excess
    return float(value) if value.ndim == 0 else value


def gamma_components(q: ArrayLike, beta: float, r: float) -> Tuple[ArrayLike, ArrayLike]:
    delta = delta_exponent(q, beta, r)
    return delta - (1.0 - np.asarray(q, dtype=float)) / 2.0, delta / 2.0


def gamma_exponent(q: ArrayLike, beta: float, r: float) -> ArrayLike:
    """Separation exponent min(gamma_1, gamma_2) along t_q(p)."""
    q_arr = np.asarray(q, dtype=float)
    if np.any(q_arr < 0) or np.any(q_arr > 1):
        raise InvalidParamsError("q must lie in [0, 1]")
    g1, g2 = gamma_components(q_arr, beta, r)
    value = np.minimum(g1, g2)
    return float(value) if np.ndim(value) == 0 else value


def q_candidates(beta: float, r: float) -> Tuple[float, float]:
    """(q1, q2) = (4 r, (beta + r)^2 / (4 r))"""
    if not r > 0.0:
        raise InvalidParamsError("r must be positive", details={"r": r})
    return 4.0 * r, (beta + r) ** 2 / (4.0 * r)


def q_star_closed_form(beta: float, r: float) -> float:
    # Region III ties on the whole plateau [beta, r]; q2 is the point the
    # tangent-secant rule singles out, so the same branch is kept there.
    q1, q2 = q_candidates(beta, r)
    return q1 if r <= beta / 3.0 else q2


def q_star_numeric(beta: float, r: float, step: float = 1e-3) -> float:
    """argmax of gamma on a q-grid over [0, 1], smallest q on ties."""
    grid = np.linspace(0.0, 1.0, int(round(1.0 / step)) + 1)
    return float(grid[int(np.argmax(gamma_exponent(grid, beta, r)))])


def max_gamma_on_grid(beta: float, r: float, step: float = 1e-3) -> float:
    grid = np.linspace(0.0, 1.0, int(round(1.0 / step)) + 1)
    return float(np.max(gamma_exponent(grid, beta, r)))


def fdrt_exponent_q(beta: float, r: float) -> float:
    """Exponent q of the FDRT threshold: q2 while r < beta, beta once TP/FP saturates."""
    return q_candidates(beta, r)[1] if r < beta else beta


# ==================== Classification ====================

def classify(beta: float, r: float) -> PhasePoint:
    _check_unit("beta", beta)
    _check_unit("r", r)

    if r <= rho_star(beta):
        region = Region.FAIL
    elif r <= beta / 3.0:
        region = Region.I
    elif r < beta:
        region = Region.II
    else:
        region = Region.III

    if region in (Region.FAIL, Region.I):
        fdr_limit, lfdr_limit = 1.0, 1.0
    elif region is Region.II:
        fdr_limit, lfdr_limit = (beta - r) / (2.0 * r), (r + beta) / (4.0 * r)
    else:
        fdr_limit, lfdr_limit = 0.0, 0.5

    q_star = q_star_closed_form(beta, r)
    return PhasePoint(
        beta=beta,
        r=r,
        region=region,
        q_star=q_star,
        fdr_limit=fdr_limit,
        lfdr_limit=lfdr_limit,
        sep_exponent_ideal=_gamma_unbounded(q_star, beta, r),
        sep_exponent_fdrt=_gamma_unbounded(fdrt_exponent_q(beta, r), beta, r),
        sep_exponent_bonf=gamma_exponent(1.0, beta, r),
    )


def _gamma_unbounded(q: float, beta: float, r: float) -> float:
    # q* and q2 exceed 1 only in the failure region; gamma is still well defined there
    g1, g2 = gamma_components(q, beta, r)
    return float(min(g1, g2))


def tangent_secant_limit_consistency(pt: PhasePoint) -> bool:
    """Whether the Lfdr limit equals (1 + FDR limit) / 2."""
    if pt.region is Region.FAIL:
        raise InvalidParamsError("limits are not defined in the failure region",
                                 details={"beta": pt.beta, "r": pt.r})
    return math.isclose(pt.lfdr_limit, 0.5 * (1.0 + pt.fdr_limit), rel_tol=1e-12, abs_tol=1e-15)


def phase_table(beta_grid: Iterable[float], r_grid: Iterable[float]) -> pd.DataFrame:
    r_values = list(r_grid)
    rows = [classify(float(beta), float(r)).to_dict() for beta in beta_grid for r in r_values]
    return pd.DataFrame(rows, columns=PHASE_COLUMNS)


# ==================== Method comparison ====================

def method_success_region(method: Method, beta: float) -> float:
    """Smallest r at which the method succeeds."""
    _check_unit("beta", beta)
    if method in (Method.IDEAL, Method.HCT):
        return rho_star(beta)
    return (1.0 - math.sqrt(1.0 - beta)) ** 2


def method_exponent(method: Method, beta: float, r: float) -> float:
    """Separation exponent of a method, 0 where it fails."""
    pt = classify(beta, r)
    if method in (Method.IDEAL, Method.HCT):
        value = pt.sep_exponent_ideal
    elif method is Method.FDRT:
        value = pt.sep_exponent_fdrt
    else:
        value = pt.sep_exponent_bonf
    if r <= method_success_region(method, beta):
        return 0.0
    return max(value, 0.0)


def exponent_curves(beta: float, r_grid: Iterable[float]) -> pd.DataFrame:
    rows = []
    for r in r_grid:
        row = {"beta": beta, "r": float(r)}
        for method in Method:
            row[method.value] = method_exponent(method, beta, float(r))
        rows.append(row)
    return pd.DataFrame(rows, columns=EXPONENT_COLUMNS)


# ==================== Finite-p boundaries ====================

def boundary_error(beta: float, r: float, p: int, kind: ThresholdKind = ThresholdKind.CLIP,
                   c: float = 0.5, gamma: float = 1.0, t0: Optional[float] = None) -> float:
    """Err~ at the ideal HCT threshold of the ARW point (beta, r) at size p."""
    params = ArwParams(beta=beta, r=r, p=p, c=c, gamma=gamma).to_rw()
    return err_proxy(params, kind, hct_ideal(params.mixture(), t0))


def _r_scan_grid() -> np.ndarray:
    return np.concatenate(([1e-6], np.linspace(0.01, 0.99, 99), [1.0 - 1e-6]))


def boundary_r(beta: float, level: float, p: int, r_grid: Sequence[float], errors: Sequence[float],
               **kwargs) -> float:
    """r with Err~ = level, bisected inside the first grid cell where Err~ drops to the level."""
    below = np.flatnonzero(np.asarray(errors) <= level)
    if below.size == 0 or below[0] == 0:
        raise OutOfRangeError("no r in (0, 1) attains the error level",
                              details={"beta": beta, "level": level, "p": p})
    k = int(below[0])
    r = bisect_crossing(lambda x: boundary_error(beta, x, p, **kwargs) - level,
                        float(r_grid[k - 1]), float(r_grid[k]), xtol=1e-7)
    miss = abs(boundary_error(beta, r, p, **kwargs) - level)
    if miss > 1e-4:
        logger.warning(f"boundary at beta={beta} misses level {level} by {miss:.2e}",
                       extra={"details": {"p": p, "r": r}})
    return r


def finite_p_boundary(p: int, error_levels: Sequence[float], beta_grid: Sequence[float],
                      kind: ThresholdKind = ThresholdKind.CLIP, c: float = 0.5, gamma: float = 1.0,
                      t0: Optional[float] = None) -> pd.DataFrame:
    """
    For every beta, the r at which the proxy error of ideal HC thresholding equals each level.

    Uses n = max(2, round(c log(p)^gamma)). Levels nobody attains inside (0, 1)
    are reported with r = nan and status "out-of-range".
    """
    if p < 100:
        raise InvalidParamsError("finite_p_boundary requires p >= 100", details={"p": p})
    for level in error_levels:
        if not 0.0 < level < 0.5:
            raise InvalidParamsError("error levels must lie in (0, 0.5)", details={"level": level})

    n = ArwParams(beta=0.5, r=0.5, p=p, c=c, gamma=gamma).n
    options = {"kind": kind, "c": c, "gamma": gamma, "t0": t0}
    r_grid = _r_scan_grid()
    rows: List[dict] = []
    for beta in beta_grid:
        _check_unit("beta", beta)
        errors = np.array([boundary_error(beta, float(r), p, **options) for r in r_grid])
        if np.any(np.diff(errors) > 1e-9):
            logger.warning(f"Err~ is not monotone in r at beta={beta}",
                           extra={"details": {"p": p, "max_rise": float(np.max(np.diff(errors)))}})
        for level in error_levels:
            try:
                r = boundary_r(beta, level, p, r_grid, errors, **options)
                status = "ok"
            except OutOfRangeError as e:
                logger.info(e.message, extra={"details": e.details})
                r, status = math.nan, "out-of-range"
            rows.append({"p": p, "n": n, "level": level, "beta": float(beta), "r": r, "status": status})
    return pd.DataFrame(rows, columns=BOUNDARY_COLUMNS)
