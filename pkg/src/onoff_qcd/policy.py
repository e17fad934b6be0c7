"""Observation-control and stopping policies over the posterior."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .posterior import BeliefState, ThresholdPair, p_to_z, z_skip, z_take, NEG_INF


@dataclass(frozen=True)
class TwoThreshold:
    """Take an observation iff p >= B; declare the change once p > A."""

    thresholds: ThresholdPair

    @classmethod
    def from_log_odds(cls, a: float, b: float) -> "TwoThreshold":
        return cls(ThresholdPair(a, b))

    @classmethod
    def from_probabilities(cls, A: float, B: float) -> "TwoThreshold":
        return cls(ThresholdPair.from_probabilities(A, B))

    @property
    def a(self) -> float:
        return self.thresholds.a

    @property
    def b(self) -> float:
        return self.thresholds.b


@dataclass(frozen=True)
class Shiryaev:
    """Classical Shiryaev rule: always observe, stop once p > A."""

    a: float

    @classmethod
    def from_probability(cls, A: float) -> "Shiryaev":
        return cls(p_to_z(A))

    @property
    def b(self) -> float:
        return NEG_INF


@dataclass(frozen=True)
class FractionalSampling:
    """Shiryaev stopping with each observation taken independently w.p. eps."""

    a: float
    eps: float

    def __post_init__(self):
        if not 0.0 <= self.eps <= 1.0:
            raise ValueError(f"eps must lie in [0, 1], got {self.eps}")


@dataclass(frozen=True)
class TabulatedDP:
    """Policy read off a solved value-function grid (see :mod:`bellman`)."""

    grid: Optional[object]
    lambda_f: float
    lambda_e: float

    def _arrays(self):
        if self.grid is None:
            raise ConfigurationError("TabulatedDP policy has no value grid attached")
        return self.grid

    def stop_at(self, p: float) -> bool:
        g = self._arrays()
        stop_cost = self.lambda_f * (1.0 - p)
        cont = p + float(np.interp(p, g.p, g.AJ))
        return stop_cost <= cont

    def take_at(self, p: float) -> bool:
        g = self._arrays()
        d = float(np.interp(p, g.p, g.d))
        return d >= self.lambda_e * (1.0 - p) - g.tie_tol


Policy = Union[TwoThreshold, Shiryaev, FractionalSampling, TabulatedDP]


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class Decision:
    stop_now: bool
    take_next: bool


def decide(policy: Policy, state: BeliefState, rng: Optional[np.random.Generator] = None) -> Decision:
    if isinstance(policy, TabulatedDP):
        if policy.stop_at(state.p):
            return Decision(True, False)
        return Decision(False, policy.take_at(state.p))
    if state.z > policy.a:
        return Decision(True, False)
    if isinstance(policy, TwoThreshold):
        return Decision(False, state.z >= policy.b)
    if isinstance(policy, Shiryaev):
        return Decision(False, True)
    if isinstance(policy, FractionalSampling):
        return Decision(False, _coin(policy.eps, rng))
    raise TypeError(f"unknown policy {policy!r}")


def _coin(eps: float, rng) -> bool:
    # degenerate eps consume no randomness, so eps=1 replays Shiryaev exactly
    if eps >= 1.0:
        return True
    if eps <= 0.0:
        return False
    return rng.random() < eps


def step(policy: Policy, state: BeliefState, scenario, k: int, rng=None):
    """Advance from time k to k+1.

    Returns ``(next_state, decision, observation_used)``. At k = 0 the stop
    decision is suppressed, since the stopping time is at least 1. When the
    decision is to stop, the state is returned unchanged.
    """
    if rng is None:
        rng = scenario.rng
    decision = decide(policy, state, rng)
    if decision.stop_now and k >= 1:
        return state, decision, False
    if decision.stop_now:
        # k = 0: p0 above A still has to be followed by one transition
        take = _take_rule_ignoring_stop(policy, state, rng)
        decision = Decision(False, take)
    rho = scenario.prior.rho
    if decision.take_next:
        x = scenario.observation(k + 1)
        z = z_take(x, state.z, rho, scenario.model)
        return BeliefState.from_z(z), decision, True
    return BeliefState.from_z(z_skip(state.z, rho)), decision, False


def _take_rule_ignoring_stop(policy, state, rng) -> bool:
    if isinstance(policy, TwoThreshold):
        return state.z >= policy.b
    if isinstance(policy, Shiryaev):
        return True
    if isinstance(policy, FractionalSampling):
        return _coin(policy.eps, rng)
    return policy.take_at(state.p)


def kernel_parameters(policy: Policy) -> tuple[int, float, float, float]:
    """(kind, a, b, eps) for the compiled trial simulator; kind 0 = thresholds, 1 = coin."""
    if isinstance(policy, TwoThreshold):
        return 0, policy.a, policy.b, 1.0
    if isinstance(policy, Shiryaev):
        return 0, policy.a, NEG_INF, 1.0
    if isinstance(policy, FractionalSampling):
        return 1, policy.a, NEG_INF, policy.eps
    raise TypeError(f"{type(policy).__name__} has no kernel representation")


def describe(policy: Policy) -> dict:
    if isinstance(policy, TwoThreshold):
        return {"policy": "two-threshold", "a": policy.a, "b": policy.b}
    if isinstance(policy, Shiryaev):
        return {"policy": "shiryaev", "a": policy.a, "b": -math.inf}
    if isinstance(policy, FractionalSampling):
        return {"policy": "fractional", "a": policy.a, "eps": policy.eps}
    return {"policy": "tabulated-dp", "lambda_f": policy.lambda_f, "lambda_e": policy.lambda_e}
