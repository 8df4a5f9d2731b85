"""
Gaussian primitives, folded laws and thresholded-Gaussian moments.

Tails are always evaluated through the complementary error function
(scipy.special.ndtr on the reflected argument), never as 1 - cdf.

Moments of eta_t(mu + W), W ~ N(0, 1). With a = t - mu and b = t + mu:

    clip, order 1:  Phi_bar(a) - Phi_bar(b)
    clip, order 2:  Phi_bar(a) + Phi_bar(b)
    hard, order 1:  mu (Phi_bar(a) + Phi_bar(b)) + phi(a) - phi(b)
    hard, order 2:  (1 + mu^2)(Phi_bar(a) + Phi_bar(b)) + (t + mu) phi(a) + (t - mu) phi(b)
    soft, order 1:  phi(a) - a Phi_bar(a) - phi(b) + b Phi_bar(b)
    soft, order 2:  (1 + a^2) Phi_bar(a) - a phi(a) + (1 + b^2) Phi_bar(b) - b phi(b)

They follow from the truncated-normal identities
E[W; W > c] = phi(c) and E[W^2; W > c] = c phi(c) + Phi_bar(c),
applied once to the upper tail {Z > t} and once, after reflection, to {Z < -t}.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Union

import numpy as np
from scipy import special

from errors import InvalidParamsError

ArrayLike = Union[float, np.ndarray]

SQRT_2PI = math.sqrt(2.0 * math.pi)


class ThresholdKind(Enum):
    CLIP = "clip"
    HARD = "hard"
    SOFT = "soft"


# ==================== Gaussian primitives ====================

def phi(x: ArrayLike) -> ArrayLike:
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / SQRT_2PI


def Phi(x: ArrayLike) -> ArrayLike:
    return special.ndtr(np.asarray(x, dtype=float))


def Phi_bar(x: ArrayLike) -> ArrayLike:
    """Standard normal survival, computed by reflection (erfc based)."""
    return special.ndtr(-np.asarray(x, dtype=float))


def Phi_bar_inv(q: float) -> float:
    """
    Inverse survival function: the t with Phi_bar(t) = q.

    ndtri supplies the starting point; two Newton steps on Phi_bar polish it.
    """
    if not 0.0 < q < 1.0:
        raise InvalidParamsError("Phi_bar_inv requires 0 < q < 1", details={"q": q})
    t = -float(special.ndtri(q))
    for _ in range(2):
        density = float(phi(t))
        if density <= 0.0:
            break
        t += (float(Phi_bar(t)) - q) / density
    return t


# ==================== Model parameters ====================

@dataclass(frozen=True)
class RwParams:
    """Finite rare/weak model: p features, n training samples, fraction epsilon useful at strength tau."""
    p: int
    n: int
    epsilon: float
    tau: float

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 1:
            raise InvalidParamsError("p must be a positive integer", details={"p": self.p})
        if int(self.n) != self.n or self.n < 1:
            raise InvalidParamsError("n must be a positive integer", details={"n": self.n})
        if not 0.0 <= self.epsilon <= 1.0:
            raise InvalidParamsError("epsilon must lie in [0, 1]", details={"epsilon": self.epsilon})
        if not (math.isfinite(self.tau) and self.tau >= 0.0):
            raise InvalidParamsError("tau must be finite and nonnegative", details={"tau": self.tau})

    @property
    def k(self) -> int:
        """Number of useful features, round(epsilon * p) with a floor of 1 when epsilon > 0."""
        if self.epsilon == 0.0:
            return 0
        return max(1, int(round(self.epsilon * self.p)))

    @property
    def mu0(self) -> float:
        return self.tau / math.sqrt(self.n)

    def mixture(self) -> "FoldedMixture":
        return FoldedMixture(epsilon=self.epsilon, tau=self.tau)


@dataclass(frozen=True)
class ArwParams:
    """
    Asymptotic rare/weak coordinates.

    epsilon = p^-beta, tau = sqrt(2 r log p), n = max(2, round(c * log(p)^gamma)).
    """
    beta: float
    r: float
    p: int
    c: float = 0.5
    gamma: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise InvalidParamsError("beta must lie in (0, 1)", details={"beta": self.beta})
        if not 0.0 < self.r < 1.0:
            raise InvalidParamsError("r must lie in (0, 1)", details={"r": self.r})
        if self.p < 2:
            raise InvalidParamsError("p must be at least 2", details={"p": self.p})
        if self.c <= 0.0:
            raise InvalidParamsError("c must be positive", details={"c": self.c})

    @property
    def epsilon(self) -> float:
        return float(self.p) ** (-self.beta)

    @property
    def tau(self) -> float:
        return math.sqrt(2.0 * self.r * math.log(self.p))

    @property
    def n(self) -> int:
        return max(2, int(round(self.c * math.log(self.p) ** self.gamma)))

    def threshold_at(self, q: float) -> float:
        """t_q(p) = sqrt(2 q log p)"""
        return math.sqrt(2.0 * q * math.log(self.p))

    def to_rw(self) -> RwParams:
        return RwParams(p=int(self.p), n=self.n, epsilon=self.epsilon, tau=self.tau)


# ==================== Folded mixture ====================

@dataclass(frozen=True)
class FoldedMixture:
    """Law of |Z| when Z ~ (1 - epsilon) N(0, 1) + epsilon N(tau, 1)."""
    epsilon: float
    tau: float

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise InvalidParamsError("epsilon must lie in [0, 1]", details={"epsilon": self.epsilon})
        if not (math.isfinite(self.tau) and self.tau >= 0.0):
            raise InvalidParamsError("tau must be finite and nonnegative", details={"tau": self.tau})


def _check_folded_argument(t: ArrayLike) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(np.isnan(t)):
        raise InvalidParamsError("folded laws are defined for t >= 0 only")
    return t


def half_normal_survival(t: ArrayLike, tau: float = 0.0) -> ArrayLike:
    """Psi_bar_tau(t) = P(|tau + W| > t)."""
    return Phi_bar(np.asarray(t, dtype=float) - tau) + Phi_bar(np.asarray(t, dtype=float) + tau)


def folded_survival(m: FoldedMixture, t: ArrayLike) -> ArrayLike:
    t = _check_folded_argument(t)
    return (1.0 - m.epsilon) * 2.0 * Phi_bar(t) + m.epsilon * half_normal_survival(t, m.tau)


def folded_cdf(m: FoldedMixture, t: ArrayLike) -> ArrayLike:
    t = _check_folded_argument(t)
    null_part = Phi(t) - Phi(-t)
    signal_part = Phi(t - m.tau) - Phi(-t - m.tau)
    return (1.0 - m.epsilon) * null_part + m.epsilon * signal_part


def folded_density(m: FoldedMixture, t: ArrayLike) -> ArrayLike:
    t = _check_folded_argument(t)
    return (1.0 - m.epsilon) * 2.0 * phi(t) + m.epsilon * (phi(t - m.tau) + phi(t + m.tau))


# ==================== Threshold nonlinearities ====================

def eta(kind: ThresholdKind, t: float, z: ArrayLike) -> ArrayLike:
    """Apply clip / hard / soft thresholding at level t to z."""
    if t < 0:
        raise InvalidParamsError("threshold must be nonnegative", details={"t": t})
    z = np.asarray(z, dtype=float)
    magnitude = np.abs(z)
    if kind is ThresholdKind.CLIP:
        return np.sign(z) * (magnitude > t)
    if kind is ThresholdKind.HARD:
        return z * (magnitude > t)
    if kind is ThresholdKind.SOFT:
        return np.sign(z) * np.maximum(magnitude - t, 0.0)
    raise InvalidParamsError(f"unknown threshold kind: {kind}")


def eta_moment(kind: ThresholdKind, t: ArrayLike, mu: float, order: int) -> ArrayLike:
    """E eta_t(mu + W)^order for W ~ N(0, 1); order is 1 or 2. Vectorized in t."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise InvalidParamsError("threshold must be nonnegative")
    if order not in (1, 2):
        raise InvalidParamsError("order must be 1 or 2", details={"order": order})

    a = t - mu
    b = t + mu
    sa, sb = Phi_bar(a), Phi_bar(b)
    da, db = phi(a), phi(b)

    if kind is ThresholdKind.CLIP:
        return sa - sb if order == 1 else sa + sb
    if kind is ThresholdKind.HARD:
        if order == 1:
            return mu * (sa + sb) + da - db
        return (1.0 + mu * mu) * (sa + sb) + (t + mu) * da + (t - mu) * db
    if kind is ThresholdKind.SOFT:
        if order == 1:
            return da - a * sa - db + b * sb
        return (1.0 + a * a) * sa - a * da + (1.0 + b * b) * sb - b * db
    raise InvalidParamsError(f"unknown threshold kind: {kind}")
