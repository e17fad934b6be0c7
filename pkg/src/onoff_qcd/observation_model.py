"""Change-point prior, pre/post-change observation laws and scenario sampling."""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

NEVER = None  # change-time sentinel for "the whole stream is pre-change"


@dataclass(frozen=True)
class GeometricPrior:
    """Geometric change-time law: P{G=0}=pi0, P{G=k}=(1-pi0) rho (1-rho)^(k-1)."""

    rho: float
    pi0: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if not 0.0 <= self.pi0 < 1.0:
            raise ValueError(f"pi0 must lie in [0, 1), got {self.pi0}")

    @property
    def skip_drift(self) -> float:
        """|log(1 - rho)|, the deterministic climb of the log-odds per step."""
        return -math.log1p(-self.rho)

    def mean_change_time(self) -> float:
        return (1.0 - self.pi0) / self.rho

    def pmf(self, k: int) -> float:
        if k == 0:
            return self.pi0
        if k < 0:
            return 0.0
        return (1.0 - self.pi0) * self.rho * (1.0 - self.rho) ** (k - 1)


class ObservationModel(ABC):
    """Pre-change density f0 and post-change density f1 of a single observation."""

    @abstractmethod
    def sample(self, rng: np.random.Generator, post: bool) -> float: ...

    @abstractmethod
    def log_lr(self, x): ...

    @abstractmethod
    def kl_post_pre(self) -> float: ...

    @abstractmethod
    def kl_pre_post(self) -> float: ...

    @abstractmethod
    def density(self, x, post: bool): ...


@dataclass(frozen=True)
class GaussianMeanShiftModel(ObservationModel):
    """f0 = N(0, 1), f1 = N(theta, 1)."""

    theta: float

    def __post_init__(self):
        if not (math.isfinite(self.theta) and self.theta > 0):
            raise ValueError(f"theta must be a positive finite real, got {self.theta}")

    def sample(self, rng: np.random.Generator, post: bool) -> float:
        # theta + N(0,1) keeps the draw order identical to the compiled kernels
        z = rng.standard_normal()
        return self.theta + z if post else z

    def log_lr(self, x):
        return self.theta * x - 0.5 * self.theta * self.theta

    def kl_post_pre(self) -> float:
        return 0.5 * self.theta * self.theta

    def kl_pre_post(self) -> float:
        return 0.5 * self.theta * self.theta

    def density(self, x, post: bool):
        mean = self.theta if post else 0.0
        return np.exp(-0.5 * (np.asarray(x) - mean) ** 2) / math.sqrt(2.0 * math.pi)

    @property
    def symmetry_point(self) -> float:
        """The x at which f1(x) = f0(x)."""
        return 0.5 * self.theta


def log_lr(model: ObservationModel, x: float) -> float:
    """log f1(x)/f0(x); rejects non-finite input."""
    if not math.isfinite(x):
        raise ValueError(f"observation must be finite, got {x}")
    return float(model.log_lr(x))


def kl_divergence(model: ObservationModel) -> float:
    """D(f1 || f0)."""
    return model.kl_post_pre()


def sample_change_time(prior: GeometricPrior, rng: np.random.Generator) -> int:
    if prior.pi0 > 0.0 and rng.random() < prior.pi0:
        return 0
    return int(rng.geometric(prior.rho))


def y_drift(model: ObservationModel, prior: GeometricPrior,
            regime: Literal["pre", "post"]) -> float:
    """Mean of Y = log L(X) + |log(1-rho)| under f0 ("pre") or f1 ("post")."""
    if regime == "post":
        return model.kl_post_pre() + prior.skip_drift
    if regime == "pre":
        return -model.kl_pre_post() + prior.skip_drift
    raise ValueError(f"regime must be 'pre' or 'post', got {regime!r}")


@dataclass
class Scenario:
    """One realisation of (G, X_1, X_2, ...) with lazily drawn observations.

    The change time is drawn first; observations are drawn only when requested,
    in request order, so skipped indices consume no randomness. Requests must be
    made at non-decreasing indices for the stream to be seed-determined.
    """

    model: ObservationModel
    prior: GeometricPrior
    rng: np.random.Generator
    change_time: int | None = field(default=-1)
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.change_time == -1:
            self.change_time = sample_change_time(self.prior, self.rng)

    @classmethod
    def from_seed(cls, model, prior, seed, change_time: int | None = -1) -> "Scenario":
        return cls(model, prior, np.random.default_rng(seed), change_time)

    def is_post_change(self, k: int) -> bool:
        return self.change_time is not NEVER and k >= self.change_time

    def observation(self, k: int) -> float:
        if k < 1:
            raise IndexError("observations are indexed from 1")
        if k not in self._cache:
            self._cache[k] = self.model.sample(self.rng, self.is_post_change(k))
        return self._cache[k]
