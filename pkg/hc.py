"""
Higher Criticism: the objective, the empirical HC threshold on z-scores,
and the HCT functional of a folded two-point mixture.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from config import Config
from distributions import (
    ArrayLike,
    FoldedMixture,
    Phi_bar,
    folded_cdf,
    folded_survival,
    half_normal_survival,
)
from errors import DegenerateError, InvalidParamsError
from search import SearchResult, grid_then_golden

logger = logging.getLogger("hctlab.hc")

TRACE_COLUMNS = ["i", "i_over_p", "p_value", "hc_value"]


@dataclass
class HcScanResult:
    argmax_index: int                 # i-hat, 1-based
    threshold: float                  # |Z| paired with pi_(i-hat)
    objective_max: float
    n_features: int
    alpha0: float
    indices: np.ndarray = field(repr=False)
    p_values: np.ndarray = field(repr=False)     # sorted ascending, scan range only
    hc_values: np.ndarray = field(repr=False)

    def trace_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "i": self.indices,
            "i_over_p": self.indices / self.n_features,
            "p_value": self.p_values,
            "hc_value": self.hc_values,
        }, columns=TRACE_COLUMNS)

    def summary(self) -> dict:
        return {
            "threshold": self.threshold,
            "argmax_index": self.argmax_index,
            "objective_max": self.objective_max,
            "n_features": self.n_features,
            "alpha0": self.alpha0,
        }


def hc_objective(i: int, N: int, p_value: float) -> float:
    """sqrt(N) (i/N - pi_(i)) / sqrt(i/N (1 - i/N))"""
    if int(i) != i or int(N) != N:
        raise InvalidParamsError("i and N must be integers", details={"i": i, "N": N})
    if not 1 <= i < N:
        raise InvalidParamsError("hc_objective requires 1 <= i < N", details={"i": i, "N": N})
    if not 0.0 < p_value < 1.0:
        raise InvalidParamsError("p_value must lie in (0, 1)", details={"p_value": p_value})
    frac = i / N
    return math.sqrt(N) * (frac - p_value) / math.sqrt(frac * (1.0 - frac))


def p_values_from_z(z: ArrayLike) -> np.ndarray:
    """Two-sided p-values in (0, 1]; tails that underflow (|z| above about 38.5) are floored at the smallest normal float."""
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise InvalidParamsError("z-scores must be finite")
    return np.maximum(2.0 * Phi_bar(np.abs(z)), np.finfo(float).tiny)


def scan_limit(N: int, alpha0: float) -> int:
    """Largest index scanned: max(1, floor(alpha0 N)), kept below N where the objective is undefined."""
    return min(max(1, int(math.floor(alpha0 * N))), N - 1)


def hct_empirical(z: ArrayLike, alpha0: Optional[float] = None) -> HcScanResult:
    """
    HC threshold of a z-score vector: |z| at the first maximizer of the HC objective
    over the scan range.

    With no signal at all (every z = 0, every p-value 1) the objective increases
    along the scan, so the result is the last scanned index with threshold 0.
    """
    alpha0 = Config.ALPHA0 if alpha0 is None else alpha0
    z = np.asarray(z, dtype=float).ravel()
    N = z.size
    if N < 2:
        raise InvalidParamsError("hct_empirical needs at least two z-scores", details={"N": N})
    if not 0.0 < alpha0 <= 1.0:
        raise InvalidParamsError("alpha0 must lie in (0, 1]", details={"alpha0": alpha0})

    p_values = p_values_from_z(z)
    magnitude = np.abs(z)
    # ranking on |z| rather than on p-values keeps order when tails underflow to 0
    order = np.argsort(-magnitude, kind="stable")

    limit = scan_limit(N, alpha0)
    indices = np.arange(1, limit + 1)
    frac = indices / N
    sorted_p = p_values[order[:limit]]
    hc_values = math.sqrt(N) * (frac - sorted_p) / np.sqrt(frac * (1.0 - frac))

    k = int(np.argmax(hc_values))  # first maximum, i.e. smallest i
    result = HcScanResult(
        argmax_index=k + 1,
        threshold=float(magnitude[order[k]]),
        objective_max=float(hc_values[k]),
        n_features=N,
        alpha0=alpha0,
        indices=indices,
        p_values=sorted_p,
        hc_values=hc_values,
    )
    logger.debug("empirical HCT at i=%d of %d, t=%.6f", result.argmax_index, N, result.threshold)
    return result


# ==================== HCT functional ====================

def hc_ideal_objective(m: FoldedMixture, t: ArrayLike) -> ArrayLike:
    """(G_bar(t) - Psi_bar(t)) / sqrt(G(t) G_bar(t)); nan where G or G_bar vanish."""
    t = np.asarray(t, dtype=float)
    # G_bar - Psi_bar = epsilon (Psi_bar_tau - Psi_bar_0); formed directly to avoid cancellation
    excess = m.epsilon * (half_normal_survival(t, m.tau) - 2.0 * Phi_bar(t))
    spread = folded_cdf(m, t) * folded_survival(m, t)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(spread > 0, excess / np.sqrt(spread), np.nan)


def hct_ideal_search(m: FoldedMixture, t0: Optional[float] = None) -> SearchResult:
    t0 = Config.HC_T0 if t0 is None else t0
    if m.epsilon == 0.0:
        raise DegenerateError("HCT functional is undefined for the pure-null law (epsilon = 0)",
                              details={"epsilon": m.epsilon, "tau": m.tau})
    if not (math.isfinite(t0) and t0 >= 0.0):
        raise InvalidParamsError("t0 must be finite and nonnegative", details={"t0": t0})
    t_max = max(m.tau, t0) + Config.TAIL_SPAN
    return grid_then_golden(
        lambda t: hc_ideal_objective(m, t),
        t0, t_max, Config.GRID_STEP, Config.GOLDEN_TOL,
        include_lo=False,
    )


def hct_ideal(m: FoldedMixture, t0: Optional[float] = None) -> float:
    """Maximizer of the HC functional over (t0, tau + span]."""
    return hct_ideal_search(m, t0).argmax
