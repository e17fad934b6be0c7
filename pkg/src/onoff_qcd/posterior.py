"""Posterior recursions in probability and log-odds form, and skip-only climb times.

The log-odds ``z = log(p / (1 - p))`` is the representation used for
simulation; ``p = 0`` maps to ``z = -inf``. One skip step satisfies
``e^{z'} + 1 = (e^z + 1) / (1 - rho)`` exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

NEG_INF = -math.inf


def p_to_z(p: float) -> float:
    if p <= 0.0:
        return NEG_INF
    if p >= 1.0:
        return math.inf
    return math.log(p) - math.log1p(-p)


def z_to_p(z: float) -> float:
    if z == NEG_INF:
        return 0.0
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def one_minus_p(z: float) -> float:
    """1 - p evaluated without cancellation for large z."""
    if z == NEG_INF:
        return 1.0
    if z >= 0:
        e = math.exp(-z)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(z))


@dataclass(frozen=True)
class BeliefState:
    p: float
    z: float

    @classmethod
    def from_p(cls, p: float) -> "BeliefState":
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {p}")
        return cls(p, p_to_z(p))

    @classmethod
    def from_z(cls, z: float) -> "BeliefState":
        return cls(z_to_p(z), z)


@dataclass(frozen=True)
class ThresholdPair:
    """Stopping threshold a and sampling threshold b in log-odds (b < a).

    Log-odds are stored because large a (e.g. 50) has A = 1 in double precision.
    ``b = -inf`` is B = 0, the always-observe case.
    """

    a: float
    b: float

    def __post_init__(self):
        if not math.isfinite(self.a):
            raise ValueError(f"a must be finite, got {self.a}")
        if not (self.b < self.a) or math.isnan(self.b) or self.b == math.inf:
            raise ValueError(f"need b < a, got a={self.a}, b={self.b}")

    @property
    def A(self) -> float:
        return z_to_p(self.a)

    @property
    def B(self) -> float:
        return z_to_p(self.b)

    @classmethod
    def from_probabilities(cls, A: float, B: float) -> "ThresholdPair":
        if not (0.0 < A < 1.0):
            raise ValueError(f"A must lie in (0, 1), got {A}")
        if not (0.0 <= B < A):
            raise ValueError(f"need 0 <= B < A, got A={A}, B={B}")
        return cls(p_to_z(A), p_to_z(B))


def phi_skip(p: float, rho: float) -> float:
    return p + (1.0 - p) * rho


def phi_take(x: float, p: float, rho: float, model) -> float:
    q = phi_skip(p, rho)
    if q >= 1.0:
        return 1.0
    lr = math.exp(model.log_lr(x))
    num = q * lr
    return num / (num + (1.0 - q))


def z_skip(z: float, rho: float) -> float:
    c = -math.log1p(-rho)
    if z < 0.0:
        # covers z = -inf: exp(-inf) = 0 gives log(rho) + c
        return math.log(math.exp(z) + rho) + c
    return z + math.log1p(rho * math.exp(-z)) + c


def z_take(x: float, z: float, rho: float, model) -> float:
    return z_skip(z, rho) + model.log_lr(x)


def t_exact(x: float, y: float, rho: float, max_steps: int = 100_000_000) -> int:
    """Smallest k >= 0 such that k skip steps from x end strictly above y."""
    k = 0
    z = x
    while not z > y:
        z = z_skip(z, rho)
        k += 1
        if k > max_steps:
            raise RuntimeError("skip-climb did not terminate")
    return k


def _log1p_exp(v: float) -> float:
    """log(1 + e^v), finite for v = -inf."""
    if v == NEG_INF:
        return 0.0
    return v + math.log1p(math.exp(-v)) if v > 0 else math.log1p(math.exp(v))


def t_closed_form(x: float, y: float, rho: float) -> float:
    """(log(1+e^y) - log(1+e^x)) / |log(1-rho)|; 0 when x is already above y."""
    if x > y:
        return 0.0
    return (_log1p_exp(y) - _log1p_exp(x)) / (-math.log1p(-rho))


def t_bounds(x: float, y: float, rho: float) -> tuple[float, float]:
    """Bracket (lo, hi] containing t_exact(x, y) whenever x <= y.

    From e^{Z_t} + 1 = (e^x + 1)/(1-rho)^t together with
    y < Z_t <= y + |log(1-rho)| + log(1 + rho e^{-y}):
    lo = (log(1+e^y) - log(1+e^x)) / c and hi = lo + 1.
    """
    c = -math.log1p(-rho)
    lo = (_log1p_exp(y) - _log1p_exp(x)) / c
    # log(1 + e^y (1 + rho e^{-y})/(1 - rho)) = log((1 + e^y)/(1 - rho))
    hi = (_log1p_exp(y) + c - _log1p_exp(x)) / c
    return lo, hi


def z_skip_iterate(z0: float, rho: float, k: int) -> float:
    """Closed form of k skip steps: log((e^{z0}+1)/(1-rho)^k - 1)."""
    c = -math.log1p(-rho)
    lg = _log1p_exp(z0) + k * c
    # log(e^lg - 1), stable for small lg
    return lg + math.log(-math.expm1(-lg))


def p_grid_phi_take(x: np.ndarray, p: np.ndarray, rho: float, model) -> np.ndarray:
    """Vectorised phi_take over an outer grid p (rows) x observations x (cols)."""
    q = (p + (1.0 - p) * rho)[:, None]
    lr = np.exp(model.log_lr(np.asarray(x)))[None, :]
    return q * lr / (q * lr + (1.0 - q))
