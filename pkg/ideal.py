"""
Proxy functionals of threshold feature selection in the rare/weak model.

Rates follow the per-feature convention TPR = eps * Psi_bar_tau(t),
FPR = (1 - eps) * Psi_bar_0(t), IDR = eps * Phi_bar(t + tau); derivatives
are the analytic (phi based) magnitudes of d/dt.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Iterable, NamedTuple, Optional, Tuple

import numpy as np
import pandas as pd

from config import Config
from distributions import (
    ArrayLike,
    RwParams,
    ThresholdKind,
    Phi,
    Phi_bar,
    Phi_bar_inv,
    eta_moment,
    half_normal_survival,
    phi,
)
from errors import AppError, EmptySelectionError, InvalidParamsError, UnattainableError
from hc import hc_ideal_objective, hct_ideal
from search import bisect_crossing, grid_then_golden, threshold_grid

logger = logging.getLogger("hctlab.ideal")

COMPARE_COLUMNS = ["tau", "method", "threshold", "sep", "err", "fdr", "mdr"]


class Rates(NamedTuple):
    tpr: ArrayLike
    fpr: ArrayLike
    idr: ArrayLike
    tpr_deriv: ArrayLike
    fpr_deriv: ArrayLike


@dataclass
class IdealSummary:
    threshold: float
    sep: float
    err: float
    fdr: float
    lfdr: float
    tpr: float
    fpr: float
    idr: float

    def to_dict(self) -> dict:
        return asdict(self)


def _check_threshold(t: ArrayLike) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(np.isnan(t)):
        raise InvalidParamsError("threshold must be nonnegative")
    return t


def _scalar(x: ArrayLike) -> ArrayLike:
    return float(x) if np.ndim(x) == 0 else x


def rates(params: RwParams, t: ArrayLike) -> Rates:
    t = _check_threshold(t)
    eps, tau = params.epsilon, params.tau
    return Rates(
        tpr=_scalar(eps * half_normal_survival(t, tau)),
        fpr=_scalar((1.0 - eps) * 2.0 * Phi_bar(t)),
        idr=_scalar(eps * Phi_bar(t + tau)),
        tpr_deriv=_scalar(eps * (phi(t - tau) + phi(t + tau))),
        fpr_deriv=_scalar((1.0 - eps) * 2.0 * phi(t)),
    )


# ==================== Separation and error ====================

def sep_components(params: RwParams, kind: ThresholdKind, t: ArrayLike) -> Tuple[ArrayLike, ArrayLike]:
    """A = eps tau E eta_t(tau + W), B = eps E eta_t^2(tau + W) + (1 - eps) E eta_t^2(W)."""
    t = _check_threshold(t)
    eps, tau = params.epsilon, params.tau
    a = eps * tau * eta_moment(kind, t, tau, 1)
    b = eps * eta_moment(kind, t, tau, 2) + (1.0 - eps) * eta_moment(kind, t, 0.0, 2)
    return a, b


def sep_curve(params: RwParams, kind: ThresholdKind, t: ArrayLike) -> np.ndarray:
    """Vectorized Sep~ = 2A / sqrt(B), with 0 where nothing is selected."""
    a, b = sep_components(params, kind, t)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(b > 0, 2.0 * a / np.sqrt(b), 0.0)


def sep_proxy(params: RwParams, kind: ThresholdKind, t: float) -> float:
    a, b = sep_components(params, kind, t)
    if not float(b) > 0.0:
        raise EmptySelectionError("selection is empty: B underflows to 0",
                                  details={"t": float(t), "epsilon": params.epsilon, "tau": params.tau})
    return 2.0 * float(a) / math.sqrt(float(b))


def sep_clip_from_rates(params: RwParams, t: float) -> float:
    """Clip separation through the rate identity 2 tau (TPR - 2 IDR) / sqrt(TPR + FPR)."""
    rt = rates(params, t)
    denominator = rt.tpr + rt.fpr
    if not denominator > 0.0:
        raise EmptySelectionError("selection is empty", details={"t": float(t)})
    return 2.0 * params.tau * (rt.tpr - 2.0 * rt.idr) / math.sqrt(denominator)


def err_from_sep(params: RwParams, sep: ArrayLike) -> ArrayLike:
    return _scalar(Phi(-0.5 * math.sqrt(params.p / params.n) * np.asarray(sep, dtype=float)))


def err_proxy(params: RwParams, kind: ThresholdKind, t: float) -> float:
    try:
        sep = sep_proxy(params, kind, t)
    except EmptySelectionError:
        return 0.5
    return float(err_from_sep(params, sep))


def ideal_threshold(params: RwParams, kind: ThresholdKind = ThresholdKind.CLIP) -> IdealSummary:
    """argmax_t Sep~(t) on [0, tau + span]; smallest t on ties."""
    found = grid_then_golden(
        lambda t: sep_curve(params, kind, t),
        0.0, params.tau + Config.TAIL_SPAN, Config.GRID_STEP, Config.GOLDEN_TOL,
    )
    return summarize(params, kind, found.argmax)


def summarize(params: RwParams, kind: ThresholdKind, t: float) -> IdealSummary:
    rt = rates(params, t)
    sep = float(sep_curve(params, kind, t))
    return IdealSummary(
        threshold=float(t),
        sep=sep,
        err=float(err_from_sep(params, sep)),
        fdr=fdr_proxy(params, t),
        lfdr=lfdr_proxy(params, t),
        tpr=rt.tpr,
        fpr=rt.fpr,
        idr=rt.idr,
    )


# ==================== FDR, local FDR, tangent-secant ====================

def fdr_proxy(params: RwParams, t: ArrayLike) -> ArrayLike:
    rt = rates(params, t)
    total = np.asarray(rt.tpr + rt.fpr)
    if np.any(total <= 0.0):
        raise EmptySelectionError("FDR undefined: both rates underflow", details={"tau": params.tau})
    return _scalar(rt.fpr / total)


def lfdr_proxy(params: RwParams, t: ArrayLike) -> ArrayLike:
    rt = rates(params, t)
    total = np.asarray(rt.tpr_deriv + rt.fpr_deriv)
    if np.any(total <= 0.0):
        raise EmptySelectionError("local FDR undefined: both densities underflow", details={"tau": params.tau})
    return _scalar(rt.fpr_deriv / total)


def mdr_proxy(params: RwParams, t: ArrayLike) -> ArrayLike:
    """Expected fraction of useful features missed, 1 - Psi_bar_tau(t)."""
    t = _check_threshold(t)
    return _scalar(1.0 - half_normal_survival(t, params.tau))


def tangent_secant_check(params: RwParams, t: float) -> Tuple[float, float]:
    """(Lfdr~(t), (1 + FDR~(t)) / 2); equal at the maximizer of the alternate proxy."""
    return float(lfdr_proxy(params, t)), 0.5 * (1.0 + float(fdr_proxy(params, t)))


def roc_slopes(params: RwParams, t: float) -> Tuple[float, float]:
    """Tangent TPR'/FPR' and secant TPR/FPR of the feature-detection ROC curve at t."""
    rt = rates(params, t)
    if not (rt.fpr > 0.0 and rt.fpr_deriv > 0.0):
        raise EmptySelectionError("ROC slopes undefined where FPR underflows", details={"t": float(t)})
    return rt.tpr_deriv / rt.fpr_deriv, rt.tpr / rt.fpr


def tangent_secant_ratio_form(params: RwParams, t: float) -> Tuple[float, float]:
    # Lfdr = 1 / (1 + tan), FDR = 1 / (1 + sec)
    tan, sec = roc_slopes(params, t)
    return 1.0 / (1.0 + tan), 0.5 * (1.0 + 1.0 / (1.0 + sec))


def alt_sep_curve(params: RwParams, t: ArrayLike) -> np.ndarray:
    """Alternate proxy 2 tau TPR / sqrt(TPR + FPR), inversions ignored."""
    rt = rates(params, t)
    total = np.asarray(rt.tpr + rt.fpr)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(total > 0, 2.0 * params.tau * np.asarray(rt.tpr) / np.sqrt(total), 0.0)


def alt_sep_argmax(params: RwParams) -> float:
    found = grid_then_golden(
        lambda t: alt_sep_curve(params, t),
        0.0, params.tau + Config.TAIL_SPAN, Config.GRID_STEP, Config.GOLDEN_TOL,
    )
    return found.argmax


# ==================== Competing thresholds ====================

def fdrt_threshold(params: RwParams, alpha: float, t0: float = 0.0) -> float:
    """Smallest t >= t0 with FDR~(t) < alpha: grid scan, then bisection on the crossing cell."""
    if not 0.0 < alpha < 1.0:
        raise InvalidParamsError("alpha must lie in (0, 1)", details={"alpha": alpha})

    grid = threshold_grid(t0, params.tau + Config.TAIL_SPAN, Config.GRID_STEP)
    fdr = np.asarray(fdr_proxy(params, grid))
    if np.any(np.diff(fdr) > 1e-12):
        logger.warning("FDR~ is not monotone on the scan grid; bisection may miss the first crossing",
                       extra={"details": {"epsilon": params.epsilon, "tau": params.tau}})

    below = np.flatnonzero(fdr < alpha)
    if below.size == 0:
        raise UnattainableError(f"FDR~ stays at or above {alpha} on the scan range",
                                details={"alpha": alpha, "min_fdr": float(fdr.min()),
                                         "t_max": float(grid[-1])})
    k = int(below[0])
    if k == 0:
        return float(grid[0])
    return bisect_crossing(lambda t: float(fdr_proxy(params, t)) - alpha,
                           float(grid[k - 1]), float(grid[k]), xtol=Config.GOLDEN_TOL)


def bonferroni_threshold(p: int) -> float:
    """Phi_bar^{-1}(1/p): on average one false alarm among p null features."""
    if int(p) != p or p < 2:
        raise InvalidParamsError("bonferroni_threshold requires an integer p >= 2", details={"p": p})
    return Phi_bar_inv(1.0 / p)


def hc_vs_sep_alignment(params: RwParams, t: float) -> Tuple[float, float]:
    """HC functional and clip Sep~ at t; proportional (factor about 1 / (2 tau)) in the upper tail."""
    hc_value = float(hc_ideal_objective(params.mixture(), t))
    if params.epsilon == 0.0:
        return hc_value, 0.0
    return hc_value, sep_proxy(params, ThresholdKind.CLIP, t)


# ==================== Method comparison ====================

def compare_methods(
    p: int,
    n: int,
    epsilon: float,
    taus: Iterable[float],
    kind: ThresholdKind = ThresholdKind.CLIP,
    alpha: float = 0.05,
    t0: Optional[float] = None,
) -> pd.DataFrame:
    """Ideal, HCT, FDRT-alpha and Bonferroni thresholds with their proxy operating characteristics."""
    rows = []
    bonferroni = bonferroni_threshold(p)
    for tau in taus:
        params = RwParams(p=p, n=n, epsilon=epsilon, tau=float(tau))
        thresholds = {"ideal": ideal_threshold(params, kind).threshold}
        try:
            thresholds["hct"] = hct_ideal(params.mixture(), t0)
        except AppError as e:
            logger.warning(f"hct unavailable at tau={tau}: {e.message}")
            thresholds["hct"] = math.nan
        try:
            thresholds["fdrt"] = fdrt_threshold(params, alpha)
        except AppError as e:
            logger.warning(f"fdrt unavailable at tau={tau}: {e.message}")
            thresholds["fdrt"] = math.nan
        thresholds["bonferroni"] = bonferroni

        for method, t in thresholds.items():
            row = {"tau": float(tau), "method": method, "threshold": t,
                   "sep": math.nan, "err": math.nan, "fdr": math.nan, "mdr": math.nan}
            if math.isfinite(t):
                sep = float(sep_curve(params, kind, t))
                row.update(sep=sep, err=float(err_from_sep(params, sep)), mdr=float(mdr_proxy(params, t)))
                try:
                    row["fdr"] = float(fdr_proxy(params, t))
                except EmptySelectionError:
                    pass
            rows.append(row)
    return pd.DataFrame(rows, columns=COMPARE_COLUMNS)


def threshold_grid_table(params: RwParams, kind: ThresholdKind, step: Optional[float] = None) -> pd.DataFrame:
    """Sep~, Err~, FDR~ and Lfdr~ on the search grid; used for plotting the proxy curves."""
    grid = threshold_grid(0.0, params.tau + Config.TAIL_SPAN, step or Config.GRID_STEP)
    rt = rates(params, grid)
    sep = sep_curve(params, kind, grid)
    with np.errstate(divide="ignore", invalid="ignore"):
        fdr = np.where(rt.tpr + rt.fpr > 0, rt.fpr / (rt.tpr + rt.fpr), np.nan)
        lfdr = np.where(rt.tpr_deriv + rt.fpr_deriv > 0, rt.fpr_deriv / (rt.tpr_deriv + rt.fpr_deriv), np.nan)
    return pd.DataFrame({"t": grid, "sep": sep, "err": err_from_sep(params, sep), "fdr": fdr, "lfdr": lfdr})
