"""Large-threshold approximations for PFA, ADD, ANO and ANO1.

The renewal quantities they need (overshoot law, slowly changing remainder,
down-crossing probability) have no closed form here and are estimated by
Monte Carlo with the block-split seeding of :mod:`montecarlo`.

Notation: D = KL(f1 || f0), c = |log(1 - rho)|. Under f1 the log-odds grows
like a random walk with increments Y = log L(X) + c of mean D + c.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .montecarlo import run_blocked
from .observation_model import GaussianMeanShiftModel, GeometricPrior, y_drift
from .posterior import NEG_INF, t_exact

STREAM_OVERSHOOT = 1
STREAM_ETA = 2
STREAM_WALD = 3
STREAM_DIRECT = 4
STREAM_CYCLE = 5
STREAM_PREBINOMIAL = 6

ETA_LOG_TOL = 35.0
ETA_TAIL_WEIGHT = 1e-6


class DomainError(ValueError):
    """The approximation is not defined for these parameters."""


class AssemblyError(ValueError):
    """An approximation was asked for without the inputs it needs."""


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(x.size))


def _require_gaussian(model):
    if not isinstance(model, GaussianMeanShiftModel):
        raise TypeError("the Monte Carlo estimators are implemented for GaussianMeanShiftModel")


def _D(model) -> float:
    return model.kl_post_pre()


def _c(prior) -> float:
    return prior.skip_drift


# ---------------------------------------------------------------- overshoot

@dataclass
class OvershootDistribution:
    samples: np.ndarray = field(repr=False)
    r_bar: float
    r_bar_se: float
    laplace_at_one: float
    laplace_se: float
    n_crossings: int
    wall_height: float

    def cdf(self, x) -> np.ndarray:
        s = np.sort(self.samples)
        return np.searchsorted(s, np.asarray(x), side="right") / s.size

    def summary(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "samples"}
        d["quantiles"] = dict(zip(("q10", "q50", "q90"),
                                  np.quantile(self.samples, [0.1, 0.5, 0.9]).tolist()))
        return d


def estimate_overshoot(model, prior: GeometricPrior, n_crossings: int = 1_000_000,
                       wall_height: Optional[float] = None, master_seed: int = 0,
                       workers: Optional[int] = None, strict: bool = True) -> OvershootDistribution:
    """Overshoot of the f1 random walk sum(Y) over a high wall.

    ``strict`` enforces at least 1e5 crossings and a wall of at least 25 mean
    increments so the overshoot law has settled to its limit.
    """
    _require_gaussian(model)
    mu = y_drift(model, prior, "post")
    if not mu > 0:
        raise DomainError(f"post-change drift D + |log(1-rho)| = {mu} must be positive")
    if wall_height is None:
        wall_height = 50.0 * mu
    if strict:
        if n_crossings < 100_000:
            raise ValueError(f"n_crossings must be at least 1e5, got {n_crossings}")
        if wall_height < 25.0 * mu:
            raise ValueError(f"wall_height {wall_height:g} is below 25 mean increments ({25 * mu:g})")
    theta, rho = model.theta, prior.rho
    parts = run_blocked(lambda g, m: kernels.overshoot(g, m, theta, rho, wall_height),
                        n_crossings, master_seed, STREAM_OVERSHOOT, workers=workers)
    r = np.concatenate(parts)
    r_bar, r_se = _mean_se(r)
    lap, lap_se = _mean_se(np.exp(-r))
    return OvershootDistribution(samples=r, r_bar=r_bar, r_bar_se=r_se, laplace_at_one=lap,
                                 laplace_se=lap_se, n_crossings=int(r.size),
                                 wall_height=float(wall_height))


# ---------------------------------------------------------------- eta

def default_truncation_k(prior: GeometricPrior) -> int:
    """Smallest k with (1 - rho)^k below the tail weight 1e-6."""
    return int(math.floor(math.log(ETA_TAIL_WEIGHT) / math.log1p(-prior.rho))) + 1


@dataclass
class EtaEstimate:
    """Samples of log S, S = sum_k rho (1-rho)^k prod_{i<=k} f0/f1(X_i) under f1.

    eta(z0) = log(e^{z0} + S), so one set of paths serves every z0.
    """

    log_sum: np.ndarray = field(repr=False)
    truncation_k: int
    n_paths: int
    n_capped: int

    def samples_at(self, z0: float) -> np.ndarray:
        if z0 == NEG_INF:
            return self.log_sum
        return np.logaddexp(z0, self.log_sum)

    def eta_mean_at(self, z0: float) -> float:
        return float(np.mean(self.samples_at(z0)))

    def eta_se_at(self, z0: float) -> float:
        return _mean_se(self.samples_at(z0))[1]


def estimate_eta(model, prior: GeometricPrior, n_paths: int = 1_000_000,
                 truncation_k: Optional[int] = None, master_seed: int = 0,
                 workers: Optional[int] = None, log_tol: float = ETA_LOG_TOL) -> EtaEstimate:
    """Monte Carlo of the limit of the slowly changing remainder.

    Each path is summed until either ``truncation_k`` terms or the current
    term falls e^{-log_tol} below the partial sum (the remaining tail is a
    martingale-weighted geometric series, so it is negligible from there).
    """
    _require_gaussian(model)
    kmin = default_truncation_k(prior)
    if truncation_k is None:
        truncation_k = kmin
    elif truncation_k < kmin:
        raise ValueError(f"truncation_k must be at least {kmin} so that (1-rho)^k < 1e-6")
    theta, rho = model.theta, prior.rho

    def fn(g, m):
        return kernels.eta_samples(g, m, theta, rho, NEG_INF, truncation_k, log_tol)

    parts = run_blocked(fn, n_paths, master_seed, STREAM_ETA, workers=workers)
    ls = np.concatenate([p[0] for p in parts])
    capped = sum(int(p[1]) for p in parts)
    return EtaEstimate(log_sum=ls, truncation_k=int(truncation_k), n_paths=int(ls.size),
                       n_capped=capped)


# ---------------------------------------------------------------- closed forms

def pfa_approx(a: float, overshoot: OvershootDistribution) -> float:
    if not a > 0:
        raise ValueError(f"a must be positive, got {a}")
    return math.exp(-a) * overshoot.laplace_at_one


def add_first_order(a: float, model, prior: GeometricPrior) -> float:
    return a / (_D(model) + _c(prior))


def add_shiryaev(a: float, model, prior: GeometricPrior, eta_mean: float, r_bar: float) -> float:
    """Second-order Shiryaev delay (a - E[eta] + r_bar)/(D + c).

    ``eta_mean`` is E[eta(z0)] for the starting log-odds z0: z0 = -inf gives
    the delay from a fresh start, z0 = b the delay from the sampling threshold.
    """
    return (a - eta_mean + r_bar) / (_D(model) + _c(prior))


def e1_nu_b(a: float, b: float, model, prior: GeometricPrior, eta_at_b: float, r_bar: float) -> float:
    """Mean passage time from b to above a with every observation taken; also approximates ANO1."""
    if not math.isfinite(b):
        raise ValueError("b must be finite")
    return add_shiryaev(a, model, prior, eta_at_b, r_bar)


def lambda_hat_mean(b: float, model, prior: GeometricPrior, r_bar: float) -> float:
    """Approximate mean time for the pre-change walk started at b to fall below b."""
    down = _D(model) - _c(prior)
    if not down > 0:
        raise DomainError(f"needs D(f1,f0) > |log(1-rho)| for a downward pre-change drift; "
                          f"got D={_D(model):.4g}, |log(1-rho)|={_c(prior):.4g}")
    return (r_bar + math.log1p(prior.rho * math.exp(-b))) / down


def _log1p_exp(v):
    return np.logaddexp(0.0, v)


def t_zhat_b_mean(b: float, prior: GeometricPrior, overshoot: OvershootDistribution) -> float:
    """Mean skip-only climb back to b from b - R, R drawn from the overshoot law."""
    r = overshoot.samples
    return float(np.mean((_log1p_exp(b) - _log1p_exp(b - r)) / _c(prior)))


def ano_components(b: float, model, prior: GeometricPrior, overshoot: OvershootDistribution) -> dict:
    lam = lambda_hat_mean(b, model, prior, overshoot.r_bar)
    t = t_zhat_b_mean(b, prior, overshoot)
    ano = lam / (prior.rho * (lam + t)) / (1.0 + math.exp(b))
    return {"lambda_hat_mean": lam, "t_zhat_b_mean": t, "ano": ano}


def ano_approx(b: float, model, prior: GeometricPrior, overshoot: OvershootDistribution) -> float:
    """Pre-change observation count: each off-on cycle contributes its on-phase.

    Raises DomainError unless D(f1,f0) > |log(1-rho)|.
    """
    return ano_components(b, model, prior, overshoot)["ano"]


def ano_prebinomial(b: float, model, prior: GeometricPrior, n_paths: int = 100_000,
                    master_seed: int = 0, cap: int = 10_000_000,
                    workers: Optional[int] = None) -> dict:
    """Diagnostic: the ANO cycle formula with simulated pre-change cycles.

    Reports both 1 - E[(1-rho)^(lambda + t)] and its first-order expansion
    rho (E[lambda] + E[t]) in the denominator.
    """
    _require_gaussian(model)
    theta, rho = model.theta, prior.rho
    parts = run_blocked(lambda g, m: kernels.exit_paths(g, m, theta, False, rho, b, b, math.inf, cap),
                        n_paths, master_seed, STREAM_PREBINOMIAL, workers=workers)
    steps = np.concatenate([p[0] for p in parts]).astype(np.float64)
    zex = np.concatenate([p[1] for p in parts])
    capped = int(sum(int(p[3].sum()) for p in parts))
    t = t_exact_vec(zex, b, rho)
    e_lam, e_t = float(steps.mean()), float(t.mean())
    surv = float(np.mean(np.exp((steps + t) * math.log1p(-rho))))
    scale = 1.0 / (1.0 + math.exp(b))
    return {"lambda_hat_mean_sim": e_lam, "t_mean_sim": e_t, "survival": surv,
            "ano_prebinomial": e_lam / (1.0 - surv) * scale,
            "ano_binomial": e_lam / (rho * (e_lam + e_t)) * scale, "capped": capped}


def t_exact_vec(x: np.ndarray, y: float, rho: float) -> np.ndarray:
    """Vectorised skip-climb count: the smallest k with (1+e^x)/(1-rho)^k > 1+e^y."""
    c = -math.log1p(-rho)
    lo = (_log1p_exp(y) - _log1p_exp(np.asarray(x, dtype=np.float64))) / c
    return np.where(np.asarray(x) > y, 0.0, np.floor(lo) + 1.0)


# ---------------------------------------------------------------- down-crossing probability

def p1_below_b(model, prior: GeometricPrior, b: float, n_paths: int = 100_000,
               master_seed: int = 0, cap: int = 10_000_000, workers: Optional[int] = None,
               strict: bool = True) -> tuple[float, float]:
    """P1(walk started at b, always observing, ever drops below b), by change of measure.

    Paths run under f0 until they drop below b; the estimate is the mean
    likelihood ratio prod f1/f0 at the exit. Returns (estimate, standard error).
    """
    _require_gaussian(model)
    if strict and n_paths < 100_000:
        raise ValueError(f"n_paths must be at least 1e5, got {n_paths}")
    theta, rho = model.theta, prior.rho
    parts = run_blocked(lambda g, m: kernels.exit_paths(g, m, theta, False, rho, b, b, math.inf, cap),
                        n_paths, master_seed, STREAM_WALD, workers=workers)
    llr = np.concatenate([p[2] for p in parts])
    capped = np.concatenate([p[3] for p in parts]).astype(bool)
    w = np.where(capped, 0.0, np.exp(llr))
    return _mean_se(w)


def p1_below_b_direct(model, prior: GeometricPrior, b: float, n_paths: int = 100_000,
                      master_seed: int = 0, upper_margin: float = 60.0,
                      workers: Optional[int] = None) -> tuple[float, float]:
    """Same probability simulated under f1, with a = b + upper_margin standing in for infinity."""
    _require_gaussian(model)
    theta, rho = model.theta, prior.rho
    up = b + upper_margin
    parts = run_blocked(lambda g, m: kernels.exit_paths(g, m, theta, True, rho, b, b, up, 10_000_000),
                        n_paths, master_seed, STREAM_DIRECT, workers=workers)
    zex = np.concatenate([p[1] for p in parts])
    return _mean_se((zex < b).astype(np.float64))


# ---------------------------------------------------------------- reset-cycle delay

@dataclass(frozen=True)
class CycleComponents:
    """Inputs of the reset-cycle delay: from b, always observing, exit above a or below b."""

    e_lambda_up: float
    e_lambda_down: float
    e_t_down: float
    p_down: float
    source: str = "approximated"


def simulate_cycle_components(a: float, b: float, model, prior: GeometricPrior,
                              n_paths: int = 100_000, master_seed: int = 0,
                              cap: int = 10_000_000, workers: Optional[int] = None) -> CycleComponents:
    _require_gaussian(model)
    theta, rho = model.theta, prior.rho
    parts = run_blocked(lambda g, m: kernels.exit_paths(g, m, theta, True, rho, b, b, a, cap),
                        n_paths, master_seed, STREAM_CYCLE, workers=workers)
    steps = np.concatenate([p[0] for p in parts]).astype(np.float64)
    zex = np.concatenate([p[1] for p in parts])
    down = zex < b
    up = ~down
    e_down = float(steps[down].mean()) if down.any() else 0.0
    e_t = float(t_exact_vec(zex[down], b, rho).mean()) if down.any() else 0.0
    return CycleComponents(e_lambda_up=float(steps[up].mean()), e_lambda_down=e_down,
                           e_t_down=e_t, p_down=float(down.mean()), source="simulated")


def approximate_cycle_components(a: float, b: float, model, prior: GeometricPrior,
                                 overshoot: OvershootDistribution, eta_at_b: float,
                                 p_down: float) -> CycleComponents:
    """Renewal substitutes: passage to a from b, undershoot of b by r_bar, closed-form climb."""
    r_bar = overshoot.r_bar
    c = _c(prior)
    return CycleComponents(
        e_lambda_up=add_shiryaev(a, model, prior, eta_at_b, r_bar),
        e_lambda_down=lambda_hat_mean(b, model, prior, r_bar),
        e_t_down=float((_log1p_exp(b) - _log1p_exp(b - r_bar)) / c),
        p_down=p_down, source="approximated")


def adds_cycle(a: float, b: float, model, prior: GeometricPrior, components: CycleComponents) -> float:
    """Passage time to a when the log-odds restarts at b after every climb back.

    The number of failed cycles is geometric with ratio p_down, each costing a
    down-exit plus the skip-only climb back to b.
    """
    q = components.p_down
    if not 0.0 <= q < 1.0:
        raise ValueError(f"down-crossing probability must lie in [0, 1), got {q}")
    if q == 0.0:
        return components.e_lambda_up
    return components.e_lambda_up + (components.e_lambda_down + components.e_t_down) * q / (1.0 - q)


def _truncated_geometric_shift(t: int, rho: float) -> float:
    """t minus the mean of a geometric(rho) change time conditioned to fall in 1..t."""
    if t <= 0:
        return 0.0
    k = np.arange(1, t + 1, dtype=np.float64)
    s = float(np.sum(k * np.exp((k - 1) * math.log1p(-rho)) * rho))
    return t - s / (-math.expm1(t * math.log1p(-rho)))


@dataclass
class NewAddInputs:
    overshoot: Optional[OvershootDistribution] = None
    eta_at_b: Optional[float] = None
    p_down: Optional[float] = None


def add_new(a: float, b: float, model, prior: GeometricPrior, components: NewAddInputs) -> dict:
    """Conditional delay E[tau - Gamma | tau >= Gamma] from the on/off state at the change.

    The change lands in an on-phase with probability p_b (delay: passage from
    the on-region), or in an off-phase, where the log-odds first climbs back to
    b by skipping and then runs the reset-cycle passage. The climb is shortened
    by the mean position of the change inside it (truncated geometric).
    Returns the value with its ingredients.
    """
    missing = [k for k in ("overshoot", "eta_at_b", "p_down") if getattr(components, k) is None]
    if missing:
        raise AssemblyError(f"add_new is missing components: {', '.join(missing)}")
    R = components.overshoot
    rho = prior.rho
    r_bar = R.r_bar
    comp = approximate_cycle_components(a, b, model, prior, R, components.eta_at_b, components.p_down)
    tc = comp.e_lambda_up
    adds = adds_cycle(a, b, model, prior, comp)
    lam = comp.e_lambda_down
    et = t_zhat_b_mean(b, prior, R)
    eb = math.exp(b)
    p_b = lam / ((1.0 + eb) * (lam + et))
    p_off_cycle = et / ((1.0 + eb) * (lam + et))
    p_initial = eb / (1.0 + eb)
    t1 = t_exact(b - r_bar, b, rho)
    t2 = t_exact(NEG_INF, b, rho)
    t_a = (_truncated_geometric_shift(t1, rho) * p_off_cycle
           + _truncated_geometric_shift(t2, rho) * p_initial)
    value = p_b * tc + (1.0 - p_b) * adds + t_a
    return {"add_new": value, "p_b": p_b, "adds": adds, "passage_from_b": tc,
            "lambda_down": lam, "t_down": comp.e_t_down, "t_shift": t_a, "p_down": comp.p_down}


# ---------------------------------------------------------------- report

@dataclass
class ApproxReport:
    theta: float
    rho: float
    a: float
    b: float
    pfa_approx: float
    add_first_order: float
    add_shiryaev: float
    add_shiryaev_eta_b: float
    add_new: float
    adds_cycle: float
    ano_approx: float
    ano1_approx: float
    e1_nu_b: float
    lambda_hat_mean: float
    t_zhat_b_mean: float
    p1_below_b: float
    p1_below_b_se: float
    p_b: float
    r_bar: float
    r_bar_se: float
    laplace_at_one: float
    laplace_se: float
    eta_minus_inf: float
    eta_minus_inf_se: float
    eta_b: float
    eta_b_se: float
    extras: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


def _nan_on_domain(fn, *args):
    try:
        return fn(*args)
    except DomainError:
        return math.nan


def build_report(a: float, b: float, model, prior: GeometricPrior,
                 overshoot: OvershootDistribution, eta: EtaEstimate,
                 p_down: Optional[tuple[float, float]] = None) -> ApproxReport:
    """Assemble every approximation for one (a, b) from precomputed renewal inputs.

    Quantities needing a finite b, or a downward pre-change drift, are NaN
    when those conditions fail.
    """
    r_bar = overshoot.r_bar
    em, em_se = eta.eta_mean_at(NEG_INF), eta.eta_se_at(NEG_INF)
    eb, eb_se = eta.eta_mean_at(b), eta.eta_se_at(b)
    finite_b = math.isfinite(b)
    nan = math.nan
    if finite_b:
        comps = _nan_on_domain(ano_components, b, model, prior, overshoot)
        comps = comps if isinstance(comps, dict) else {"ano": nan, "lambda_hat_mean": nan,
                                                       "t_zhat_b_mean": nan}
        nu_b = e1_nu_b(a, b, model, prior, eb, r_bar)
    else:
        comps = {"ano": 1.0 / prior.rho, "lambda_hat_mean": math.inf, "t_zhat_b_mean": 0.0}
        nu_b = add_shiryaev(a, model, prior, em, r_bar)
    q, q_se = p_down if p_down is not None else (nan, nan)
    new = {"add_new": nan, "p_b": nan, "adds": nan}
    if finite_b and p_down is not None and math.isfinite(comps["lambda_hat_mean"]):
        new = add_new(a, b, model, prior, NewAddInputs(overshoot, eb, q))
    return ApproxReport(
        theta=model.theta, rho=prior.rho, a=a, b=b,
        pfa_approx=pfa_approx(a, overshoot),
        add_first_order=add_first_order(a, model, prior),
        add_shiryaev=add_shiryaev(a, model, prior, em, r_bar),
        add_shiryaev_eta_b=add_shiryaev(a, model, prior, eb, r_bar),
        add_new=new["add_new"], adds_cycle=new["adds"],
        ano_approx=comps["ano"], ano1_approx=nu_b, e1_nu_b=nu_b,
        lambda_hat_mean=comps["lambda_hat_mean"], t_zhat_b_mean=comps["t_zhat_b_mean"],
        p1_below_b=q, p1_below_b_se=q_se, p_b=new["p_b"],
        r_bar=r_bar, r_bar_se=overshoot.r_bar_se, laplace_at_one=overshoot.laplace_at_one,
        laplace_se=overshoot.laplace_se, eta_minus_inf=em, eta_minus_inf_se=em_se,
        eta_b=eb, eta_b_se=eb_se)


class RenewalCache:
    """Memoises overshoot and eta estimates per (theta, rho), which is all they depend on."""

    def __init__(self, n_crossings: int = 1_000_000, n_eta: int = 1_000_000,
                 n_wald: int = 200_000, master_seed: int = 0, workers: Optional[int] = None):
        self.n_crossings, self.n_eta, self.n_wald = n_crossings, n_eta, n_wald
        self.master_seed, self.workers = master_seed, workers
        self._r: dict = {}
        self._e: dict = {}
        self._q: dict = {}

    def overshoot(self, model, prior) -> OvershootDistribution:
        key = (model.theta, prior.rho)
        if key not in self._r:
            self._r[key] = estimate_overshoot(model, prior, self.n_crossings,
                                              master_seed=self.master_seed, workers=self.workers,
                                              strict=False)
        return self._r[key]

    def eta(self, model, prior) -> EtaEstimate:
        key = (model.theta, prior.rho)
        if key not in self._e:
            self._e[key] = estimate_eta(model, prior, self.n_eta, master_seed=self.master_seed,
                                        workers=self.workers)
        return self._e[key]

    def p_down(self, model, prior, b):
        key = (model.theta, prior.rho, b)
        if key not in self._q:
            self._q[key] = p1_below_b(model, prior, b, self.n_wald, master_seed=self.master_seed,
                                      workers=self.workers, strict=False)
        return self._q[key]

    def report(self, a: float, b: float, model, prior, with_new: bool = True) -> ApproxReport:
        q = None
        if with_new and math.isfinite(b) and _D(model) > _c(prior):
            q = self.p_down(model, prior, b)
        return build_report(a, b, model, prior, self.overshoot(model, prior),
                            self.eta(model, prior), q)
