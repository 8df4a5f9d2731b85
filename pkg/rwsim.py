"""
Monte Carlo simulator of the rare/weak two-class model.

Each replicate draws its own stream from SeedSequence(seed, spawn_key=(i,)),
so records do not depend on how replicates are scheduled across threads.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from config import Config
from distributions import RwParams, ThresholdKind, Phi, eta
from errors import AppError, InvalidParamsError
from hc import hct_empirical
from ideal import bonferroni_threshold, fdrt_threshold, ideal_threshold

logger = logging.getLogger("hctlab.rwsim")

RECORD_COLUMNS = ["replicate", "threshold_used", "n_selected", "n_true_selected", "realized_fdr",
                  "realized_mdr", "test_error", "realized_sep", "plugin_error", "error"]
METRICS = ["threshold_used", "n_selected", "n_true_selected", "realized_fdr", "realized_mdr",
           "test_error", "realized_sep", "plugin_error"]

# columns of X generated per block in FullMatrix mode
BLOCK_ENTRIES = 1_000_000


class SelectorKind(Enum):
    HCT = "hct"
    IDEAL_ORACLE = "ideal"
    FIXED = "fixed"
    FDRT = "fdrt"
    BONFERRONI = "bonferroni"


class ZScoreMode(Enum):
    DIRECT = "direct"
    FULL_MATRIX = "full"


@dataclass(frozen=True)
class Selector:
    kind: SelectorKind
    value: Optional[float] = None   # alpha0 for HCT, t for FIXED, alpha for FDRT

    @classmethod
    def parse(cls, text: str) -> "Selector":
        """'hct', 'hct:0.1', 'ideal', 'fixed:2.5', 'fdrt:0.05', 'bonferroni'"""
        name, _, raw = text.strip().lower().partition(":")
        try:
            kind = SelectorKind(name)
        except ValueError:
            raise InvalidParamsError(f"unknown selector: {name}",
                                     details={"allowed": [k.value for k in SelectorKind]})
        value = None
        if raw:
            try:
                value = float(raw)
            except ValueError:
                raise InvalidParamsError(f"selector value is not a number: {raw}")
        if kind is SelectorKind.HCT and value is None:
            value = Config.ALPHA0
        if kind in (SelectorKind.FIXED, SelectorKind.FDRT) and value is None:
            raise InvalidParamsError(f"selector '{kind.value}' needs a value, e.g. {kind.value}:0.05")
        return cls(kind, value)

    def describe(self) -> str:
        return self.kind.value if self.value is None else f"{self.kind.value}:{self.value:g}"


@dataclass(frozen=True)
class SimConfig:
    params: RwParams
    kind: ThresholdKind = ThresholdKind.CLIP
    selector: Selector = field(default_factory=lambda: Selector(SelectorKind.HCT, Config.ALPHA0))
    replicates: int = 100
    test_size: int = 2000
    seed: int = 0
    zscore_mode: ZScoreMode = ZScoreMode.DIRECT

    def __post_init__(self):
        if self.replicates < 1:
            raise InvalidParamsError("replicates must be >= 1", details={"replicates": self.replicates})
        if self.test_size < 1:
            raise InvalidParamsError("test_size must be >= 1", details={"test_size": self.test_size})
        if not 0 <= self.seed < 2**64:
            raise InvalidParamsError("seed must be a 64-bit unsigned integer", details={"seed": self.seed})
        value = self.selector.value
        if self.selector.kind is SelectorKind.HCT and not 0.0 < value <= 1.0:
            raise InvalidParamsError("HCT alpha0 must lie in (0, 1]", details={"alpha0": value})
        if self.selector.kind is SelectorKind.FIXED and not value >= 0.0:
            raise InvalidParamsError("fixed threshold must be nonnegative", details={"t": value})
        if self.selector.kind is SelectorKind.FDRT and not 0.0 < value < 1.0:
            raise InvalidParamsError("FDRT alpha must lie in (0, 1)", details={"alpha": value})
        if self.zscore_mode is ZScoreMode.FULL_MATRIX:
            if self.params.n % 2:
                raise InvalidParamsError("FullMatrix mode needs an even n for balanced labels",
                                         details={"n": self.params.n})
            entries = self.params.p * self.params.n
            if entries > Config.FULL_MATRIX_LIMIT:
                raise InvalidParamsError(f"FullMatrix mode refuses p*n = {entries} entries",
                                         details={"limit": Config.FULL_MATRIX_LIMIT})

    def to_dict(self) -> Dict[str, Any]:
        return {
            **asdict(self.params),
            "kind": self.kind.value,
            "selector": self.selector.describe(),
            "replicates": self.replicates,
            "test_size": self.test_size,
            "seed": self.seed,
            "zscore_mode": self.zscore_mode.value,
        }


@dataclass
class SimData:
    mu: np.ndarray
    z: np.ndarray
    useful: np.ndarray          # boolean mask of the k nonzero coordinates
    test_labels: np.ndarray     # balanced +1 / -1
    test_noise: np.ndarray      # standard normal, projected test noise per test vector


@dataclass
class SimOutcome:
    config: SimConfig
    records: pd.DataFrame
    summary: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"config": self.config.to_dict(), **self.summary}


def replicate_rng(seed: int, replicate_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(replicate_index,)))


def balanced_labels(size: int) -> np.ndarray:
    labels = np.ones(size, dtype=float)
    labels[(size + 1) // 2:] = -1.0
    return labels


def _full_matrix_z(mu: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """z(j) = n^{-1/2} sum_i Y_i X_i(j), with X_i ~ N(Y_i mu, I) drawn a block of columns at a time."""
    labels = balanced_labels(n)
    p = mu.size
    z = np.empty(p)
    block = max(1, BLOCK_ENTRIES // n)
    for start in range(0, p, block):
        stop = min(start + block, p)
        x = labels[:, None] * mu[None, start:stop] + rng.standard_normal((n, stop - start))
        z[start:stop] = labels @ x / math.sqrt(n)
    return z


def generate(config: SimConfig, replicate_index: int) -> SimData:
    params = config.params
    k = params.k
    if k == 0:
        raise InvalidParamsError("no useful features: round(epsilon * p) is 0",
                                 details={"epsilon": params.epsilon, "p": params.p})
    rng = replicate_rng(config.seed, replicate_index)

    positions = rng.choice(params.p, size=k, replace=False)
    useful = np.zeros(params.p, dtype=bool)
    useful[positions] = True
    mu = np.where(useful, params.mu0, 0.0)

    if config.zscore_mode is ZScoreMode.DIRECT:
        z = math.sqrt(params.n) * mu + rng.standard_normal(params.p)
    else:
        z = _full_matrix_z(mu, params.n, rng)

    return SimData(
        mu=mu,
        z=z,
        useful=useful,
        test_labels=balanced_labels(config.test_size),
        test_noise=rng.standard_normal(config.test_size),
    )


def draw_test_matrix(mu: np.ndarray, size: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Explicit labeled test vectors X ~ N(Y mu, I_p) with balanced labels."""
    labels = balanced_labels(size)
    return labels, labels[:, None] * mu[None, :] + rng.standard_normal((size, mu.size))


def build_classifier(z: np.ndarray, kind: ThresholdKind, t: float) -> np.ndarray:
    """Feature weights w(j) = eta_t(z(j)). An all-zero w is legal and always predicts +1."""
    return eta(kind, t, z)


def predict(w: np.ndarray, x: np.ndarray) -> np.ndarray:
    scores = np.asarray(x, dtype=float) @ w
    return np.where(scores >= 0.0, 1.0, -1.0)


def realized_separation(w: np.ndarray, mu: np.ndarray) -> float:
    """2 <w, mu> / ||w||_2, zero for the empty classifier."""
    norm = float(np.linalg.norm(w))
    if norm == 0.0:
        return 0.0
    return 2.0 * float(w @ mu) / norm


def evaluate_test_error(w: np.ndarray, data: SimData) -> float:
    # <w, X> = Y <w, mu> + ||w|| xi has the law of the explicit score for X ~ N(Y mu, I)
    scores = data.test_labels * float(w @ data.mu) + float(np.linalg.norm(w)) * data.test_noise
    decisions = np.where(scores >= 0.0, 1.0, -1.0)
    return float(np.mean(decisions != data.test_labels))


def fixed_threshold(config: SimConfig) -> Optional[float]:
    """Threshold of a data-independent selector; None for HCT, which needs the z-scores."""
    selector, params = config.selector, config.params
    if selector.kind is SelectorKind.FIXED:
        return selector.value
    if selector.kind is SelectorKind.IDEAL_ORACLE:
        return ideal_threshold(params, config.kind).threshold
    if selector.kind is SelectorKind.FDRT:
        return fdrt_threshold(params, selector.value)
    if selector.kind is SelectorKind.BONFERRONI:
        return bonferroni_threshold(params.p)
    return None


def _replicate(config: SimConfig, index: int, oracle: Optional[float],
               oracle_failure: Optional[AppError]) -> Dict[str, Any]:
    record: Dict[str, Any] = {column: math.nan for column in RECORD_COLUMNS}
    record.update(replicate=index, error=None)
    if oracle_failure is not None:
        record["error"] = oracle_failure.code.name
        return record
    data = generate(config, index)
    try:
        t = oracle if oracle is not None else hct_empirical(data.z, config.selector.value).threshold
    except AppError as e:
        logger.warning(f"replicate {index}: selector failed: {e.message}",
                       extra={"replicate": index, "error_code": e.code.value})
        record["error"] = e.code.name
        return record

    w = build_classifier(data.z, config.kind, t)
    selected = w != 0.0
    n_selected = int(selected.sum())
    n_true = int((selected & data.useful).sum())
    sep = realized_separation(w, data.mu)
    record.update(
        threshold_used=float(t),
        n_selected=n_selected,
        n_true_selected=n_true,
        realized_fdr=(n_selected - n_true) / max(1, n_selected),
        realized_mdr=1.0 - n_true / config.params.k,
        test_error=evaluate_test_error(w, data),
        realized_sep=sep,
        plugin_error=float(Phi(-0.5 * sep)),
    )
    return record


def aggregate(records: pd.DataFrame) -> Dict[str, Any]:
    ok = records[records["error"].isna()]
    summary: Dict[str, Any] = {"replicates": int(len(records)), "flagged": int(len(records) - len(ok))}
    for metric in METRICS:
        values = ok[metric].to_numpy(dtype=float)
        mean = float(np.mean(values)) if values.size else math.nan
        se = float(np.std(values, ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
        summary[f"{metric}_mean"] = mean
        summary[f"{metric}_se"] = se
    return summary


def run(config: SimConfig, threads: Optional[int] = None) -> SimOutcome:
    """Draw, select, classify and evaluate every replicate; flagged selector failures do not abort."""
    threads = Config.THREADS if threads is None else threads
    started = time.perf_counter()

    oracle, oracle_failure = None, None
    try:
        oracle = fixed_threshold(config)
    except AppError as e:
        oracle_failure = e
        logger.warning(f"selector {config.selector.describe()} failed: {e.message}",
                       extra={"error_code": e.code.value, "details": e.details})

    def one(index: int) -> Dict[str, Any]:
        return _replicate(config, index, oracle, oracle_failure)

    indices = range(config.replicates)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows: List[Dict[str, Any]] = list(pool.map(one, indices))
    else:
        rows = [one(i) for i in indices]

    records = pd.DataFrame(rows, columns=RECORD_COLUMNS)
    outcome = SimOutcome(config=config, records=records, summary=aggregate(records))
    logger.info(f"simulation finished: {config.replicates} replicates, {outcome.summary['flagged']} flagged",
                extra={"elapsed": round(time.perf_counter() - started, 3)})
    return outcome
