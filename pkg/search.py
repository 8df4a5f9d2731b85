"""
一维搜索工具，供各阈值泛函共用

目标函数光滑但在最优点附近可能很平坦: 先在密集网格上定位，
再在获胜的网格单元内用黄金分割法细化
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize

from errors import InvalidParamsError

logger = logging.getLogger("hctlab.search")

INV_PHI = (math.sqrt(5) - 1) / 2  # 1 / phi
INV_PHI_SQUARE = (3 - math.sqrt(5)) / 2  # 1 / phi^2


@dataclass(frozen=True)
class SearchResult:
    argmax: float
    value: float
    grid_argmax: float
    grid_value: float


def golden_max(f: Callable[[float], float], a: float, b: float, tol: float = 1e-9) -> float:
    """
    黄金分割法求 f 在 [a, b] 上的最大值点

    假设 f 在区间内单峰; 返回最终区间 (宽度不超过 tol) 的中点
    """
    a, b = min(a, b), max(a, b)
    h = b - a
    if h <= tol:
        return 0.5 * (a + b)

    n = int(math.ceil(math.log(tol / h) / math.log(INV_PHI)))

    c = a + INV_PHI_SQUARE * h
    d = a + INV_PHI * h
    yc = f(c)
    yd = f(d)

    for _ in range(n - 1):
        # 相等时保留左侧单元，即取较小的参数
        if yc >= yd:
            b = d
            d = c
            yd = yc
            h = INV_PHI * h
            c = a + INV_PHI_SQUARE * h
            yc = f(c)
        else:
            a = c
            c = d
            yc = yd
            h = INV_PHI * h
            d = a + INV_PHI * h
            yd = f(d)

    if yc >= yd:
        return 0.5 * (a + d)
    return 0.5 * (c + b)


def threshold_grid(lo: float, hi: float, step: float, include_lo: bool = True) -> np.ndarray:
    if not hi > lo:
        raise InvalidParamsError("search interval is empty", details={"lo": lo, "hi": hi})
    if step <= 0:
        raise InvalidParamsError("grid step must be positive", details={"step": step})
    count = int(math.floor((hi - lo) / step + 1e-9))
    grid = lo + step * np.arange(count + 1, dtype=float)
    if grid[-1] < hi:
        grid = np.append(grid, hi)
    return grid if include_lo else grid[1:]


def grid_then_golden(
    objective: Callable[[np.ndarray], np.ndarray],
    lo: float,
    hi: float,
    step: float,
    tol: float,
    include_lo: bool = True,
) -> SearchResult:
    """
    在 [lo, hi] (include_lo=False 时为 (lo, hi]) 上最大化向量化目标函数

    网格上相等时取最小参数; 细化点仅在目标值不下降时替换网格点
    """
    grid = threshold_grid(lo, hi, step, include_lo=include_lo)
    values = np.asarray(objective(grid), dtype=float)
    values = np.where(np.isfinite(values), values, -np.inf)
    k = int(np.argmax(values))
    grid_t, grid_v = float(grid[k]), float(values[k])
    if not np.isfinite(grid_v):
        raise InvalidParamsError("objective is not finite anywhere on the search grid",
                                 details={"lo": lo, "hi": hi})

    a = float(grid[max(k - 1, 0)])
    b = float(grid[min(k + 1, len(grid) - 1)])

    def scalar(t: float) -> float:
        v = float(np.asarray(objective(np.array([t])), dtype=float)[0])
        return v if math.isfinite(v) else -math.inf

    t = golden_max(scalar, a, b, tol)
    v = scalar(t)
    if v < grid_v:
        t, v = grid_t, grid_v

    logger.debug("grid argmax %.6f refined to %.10f", grid_t, t)
    return SearchResult(argmax=t, value=v, grid_argmax=grid_t, grid_value=grid_v)


def bisect_crossing(
    f: Callable[[float], float],
    a: float,
    b: float,
    xtol: float = 1e-9,
) -> float:
    """f 在 [a, b] 上变号处的根，精度 xtol"""
    return float(optimize.bisect(f, a, b, xtol=xtol, maxiter=500))
