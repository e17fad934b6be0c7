"""Trial simulation, metric estimation and threshold calibration.

Randomness is split by block: block j of a run uses the generator
``PCG64(SeedSequence(master_seed, spawn_key=(stream, j)))`` with a fixed block
size, so the concatenated trial arrays do not depend on how many workers ran
the blocks.
"""

from __future__ import annotations

import logging
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels
from .observation_model import GaussianMeanShiftModel, GeometricPrior, ObservationModel, Scenario
from .policy import (FractionalSampling, Policy, Shiryaev, TabulatedDP, TwoThreshold, describe,
                     kernel_parameters, step)
from .posterior import NEG_INF, BeliefState, one_minus_p, p_to_z, z_to_p

log = logging.getLogger(__name__)

BLOCK_SIZE = 4096
STREAM_TRIALS = 0
TRUNCATION_WARN = 1e-3
NEVER_CHANGE = -2


class ReliabilityWarning(RuntimeWarning):
    """Too many trials hit the horizon cap for the estimate to be trusted."""


class CalibrationError(RuntimeError):
    """A threshold search could not bracket or reach its target."""


# ---------------------------------------------------------------- seeding

def block_generator(master_seed: int, stream: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(stream), int(block)))
    return np.random.Generator(np.random.PCG64(ss))


def run_blocked(fn: Callable[[np.random.Generator, int], object], n: int, master_seed: int,
                stream: int, block_size: int = BLOCK_SIZE, workers: Optional[int] = None) -> list:
    """Call ``fn(gen, m)`` per block and return the results in block order."""
    if n < 0:
        raise ValueError("n must be non-negative")
    sizes = [min(block_size, n - s) for s in range(0, n, block_size)]
    jobs = list(enumerate(sizes))

    def work(job):
        j, m = job
        return fn(block_generator(master_seed, stream, j), m)

    if workers is None:
        workers = os.cpu_count() or 1
    if workers <= 1 or len(jobs) <= 1:
        return [work(j) for j in jobs]
    # the compiled kernels release the GIL, so threads are enough
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(work, jobs))


# ---------------------------------------------------------------- records

@dataclass(frozen=True)
class TrialRecord:
    gamma: Optional[int]
    tau: int
    obs_before: int
    obs_after: int
    delay_plus: int
    one_minus_p_tau: float
    truncated: bool


def _gamma_out(g) -> Optional[int]:
    g = int(g)
    return None if g == kernels.NEVER else g


def _record(g, tau, ob, oa, omp, tr) -> TrialRecord:
    gamma = _gamma_out(g)
    tau = int(tau)
    delay = 0 if gamma is None else max(tau - gamma, 0)
    return TrialRecord(gamma=gamma, tau=tau, obs_before=int(ob), obs_after=int(oa),
                       delay_plus=delay, one_minus_p_tau=float(omp), truncated=bool(tr))


def stop_log_odds(policy: Policy) -> float:
    """Log-odds stopping threshold of a policy; for a tabulated policy the first grid stop."""
    if isinstance(policy, TabulatedDP):
        g = policy._arrays()
        stop = policy.lambda_f * (1.0 - g.p) <= g.p + g.AJ
        return p_to_z(float(g.p[int(np.argmax(stop))]))
    return policy.a


def default_horizon_cap(policy: Policy, model: ObservationModel, prior: GeometricPrior) -> int:
    a = max(stop_log_odds(policy), 0.0)
    if not math.isfinite(a):
        a = 0.0
    drift = model.kl_post_pre() + prior.skip_drift
    return int(math.ceil(20.0 / prior.rho + 40.0 * a / drift))


def _check_cap(cap: int, policy, model, prior):
    a = max(stop_log_odds(policy), 0.0)
    drift = model.kl_post_pre() + prior.skip_drift
    need = 10.0 * ((a if math.isfinite(a) else 0.0) / drift + 1.0 / prior.rho)
    if cap < need:
        raise ValueError(f"horizon_cap {cap} is below the minimum {math.ceil(need)}")


def _kernel_ok(policy, model) -> bool:
    return isinstance(model, GaussianMeanShiftModel) and not isinstance(policy, TabulatedDP)


def _forced(change_time) -> int:
    if change_time is None:
        return NEVER_CHANGE
    if change_time == -1:
        return -1
    if change_time < 0:
        raise ValueError("change_time must be -1 (draw), None (never) or >= 0")
    return int(change_time)


def _z0(prior: GeometricPrior, z0: Optional[float] = None) -> float:
    # the time-0 posterior is the prior mass at 0 unless overridden
    return p_to_z(prior.pi0) if z0 is None else float(z0)


def simulate_reference(policy: Policy, model: ObservationModel, prior: GeometricPrior,
                       gen: np.random.Generator, horizon_cap: int,
                       change_time: Optional[int] = -1, trace: Optional[list] = None,
                       z0: Optional[float] = None) -> TrialRecord:
    """Object-level simulation through :func:`policy.step`.

    Consumes the generator in the same order as the compiled trial kernel. If
    ``trace`` is a list, (k, p_k, S_k) triples are appended to it.
    """
    sc = Scenario(model, prior, gen, change_time)
    state = BeliefState.from_z(_z0(prior, z0))
    k = ob = oa = 0
    truncated = False
    while True:
        nxt, decision, used = step(policy, state, sc, k, gen)
        if decision.stop_now:
            break
        k += 1
        if used:
            if sc.is_post_change(k):
                oa += 1
            else:
                ob += 1
        state = nxt
        if trace is not None:
            trace.append((k, state.p, int(used)))
        if k >= horizon_cap:
            truncated = not _stops(policy, state)
            break
    g = sc.change_time
    delay = 0 if g is None else max(k - g, 0)
    return TrialRecord(gamma=g, tau=k, obs_before=ob, obs_after=oa, delay_plus=delay,
                       one_minus_p_tau=one_minus_p(state.z), truncated=truncated)


def _stops(policy, state) -> bool:
    if isinstance(policy, TabulatedDP):
        return policy.stop_at(state.p)
    return state.z > policy.a


def run_trial(policy: Policy, model: ObservationModel, prior: GeometricPrior, seed,
              horizon_cap: Optional[int] = None, change_time: Optional[int] = -1,
              z0: Optional[float] = None) -> TrialRecord:
    """Simulate one trial from ``seed``; the compiled kernel is used when it applies.

    ``change_time`` -1 draws from the prior, None means no change ever.
    ``z0`` overrides the starting log-odds (default: that of pi0).
    """
    cap = default_horizon_cap(policy, model, prior) if horizon_cap is None else int(horizon_cap)
    _check_cap(cap, policy, model, prior)
    gen = np.random.default_rng(seed)
    if not _kernel_ok(policy, model):
        return simulate_reference(policy, model, prior, gen, cap, change_time, z0=z0)
    kind, a, b, eps = kernel_parameters(policy)
    out = kernels.simulate_trials(gen, 1, model.theta, prior.rho, prior.pi0, _z0(prior, z0),
                                  a, b, eps, kind, cap, _forced(change_time))
    return _record(*(arr[0] for arr in out))


# ---------------------------------------------------------------- estimation

@dataclass
class TrialArrays:
    gamma: np.ndarray
    tau: np.ndarray
    obs_before: np.ndarray
    obs_after: np.ndarray
    one_minus_p: np.ndarray
    truncated: np.ndarray

    @classmethod
    def concat(cls, parts) -> "TrialArrays":
        cols = list(zip(*parts))
        return cls(*(np.concatenate(c) for c in cols))

    def record(self, i: int) -> TrialRecord:
        return _record(self.gamma[i], self.tau[i], self.obs_before[i], self.obs_after[i],
                       self.one_minus_p[i], self.truncated[i])


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    n = x.size
    if n == 0:
        return math.nan, math.nan
    m = float(np.mean(x))
    if n == 1:
        return m, math.nan
    return m, float(np.std(x, ddof=1) / math.sqrt(n))


@dataclass
class MetricsEstimate:
    add: float
    add_se: float
    add_conditional: float
    add_conditional_se: float
    pfa: float
    pfa_se: float
    pfa_indicator: float
    pfa_indicator_se: float
    ano: float
    ano_se: float
    ano1: float
    ano1_se: float
    ano_unconditional: float
    ano_unconditional_se: float
    n_trials: int
    n_conditional: int
    truncated_fraction: float
    rho: float
    pi0: float = 0.0
    warning: Optional[str] = None

    def ano_percent(self, prior: Optional[GeometricPrior] = None) -> float:
        rho, pi0 = (prior.rho, prior.pi0) if prior is not None else (self.rho, self.pi0)
        return self.ano * rho / (1.0 - pi0) * 100.0

    def ano_percent_se(self) -> float:
        return self.ano_se * self.rho / (1.0 - self.pi0) * 100.0

    def as_dict(self) -> dict:
        d = asdict(self)
        d["ano_percent"] = self.ano_percent()
        d["ano_percent_se"] = self.ano_percent_se()
        return d

    @classmethod
    def from_arrays(cls, t: TrialArrays, prior: GeometricPrior) -> "MetricsEstimate":
        n = t.tau.size
        never = t.gamma == kernels.NEVER
        g = np.where(never, t.tau, t.gamma)
        delay = np.maximum(t.tau - g, 0).astype(np.float64)
        cond = (t.tau >= t.gamma) & ~never
        add, add_se = _mean_se(delay)
        addc, addc_se = _mean_se(delay[cond])
        pfa, pfa_se = _mean_se(t.one_minus_p)
        ind, ind_se = _mean_se((t.tau < t.gamma).astype(np.float64))
        ano, ano_se = _mean_se(t.obs_before[cond].astype(np.float64))
        ano1, ano1_se = _mean_se(t.obs_after[cond].astype(np.float64))
        anou, anou_se = _mean_se(t.obs_before.astype(np.float64))
        trunc = float(np.mean(t.truncated)) if n else 0.0
        warn = None
        if trunc > TRUNCATION_WARN:
            warn = (f"{trunc:.2e} of trials reached the horizon cap "
                    f"(limit {TRUNCATION_WARN:g}); estimates are biased")
        return cls(add=add, add_se=add_se, add_conditional=addc, add_conditional_se=addc_se,
                   pfa=pfa, pfa_se=pfa_se, pfa_indicator=ind, pfa_indicator_se=ind_se,
                   ano=ano, ano_se=ano_se, ano1=ano1, ano1_se=ano1_se,
                   ano_unconditional=anou, ano_unconditional_se=anou_se,
                   n_trials=int(n), n_conditional=int(cond.sum()), truncated_fraction=trunc,
                   rho=prior.rho, pi0=prior.pi0, warning=warn)


def simulate_arrays(policy: Policy, model: ObservationModel, prior: GeometricPrior,
                    n_trials: int, master_seed: int, horizon_cap: Optional[int] = None,
                    change_time: Optional[int] = -1, workers: Optional[int] = None,
                    block_size: int = BLOCK_SIZE, stream: int = STREAM_TRIALS,
                    z0: Optional[float] = None) -> TrialArrays:
    cap = default_horizon_cap(policy, model, prior) if horizon_cap is None else int(horizon_cap)
    _check_cap(cap, policy, model, prior)
    z_start = _z0(prior, z0)
    if _kernel_ok(policy, model):
        kind, a, b, eps = kernel_parameters(policy)
        forced = _forced(change_time)
        sim = kernels.simulate_trials

        def fn(gen, m):
            return sim(gen, m, model.theta, prior.rho, prior.pi0, z_start, a, b, eps, kind, cap, forced)
    else:
        def fn(gen, m):
            recs = [simulate_reference(policy, model, prior, gen, cap, change_time, z0=z_start)
                    for _ in range(m)]
            return (np.array([kernels.NEVER if r.gamma is None else r.gamma for r in recs], np.int64),
                    np.array([r.tau for r in recs], np.int64),
                    np.array([r.obs_before for r in recs], np.int64),
                    np.array([r.obs_after for r in recs], np.int64),
                    np.array([r.one_minus_p_tau for r in recs], np.float64),
                    np.array([r.truncated for r in recs], np.uint8))
    parts = run_blocked(fn, n_trials, master_seed, stream, block_size, workers)
    return TrialArrays.concat(parts)


def estimate_metrics(policy: Policy, model: ObservationModel, prior: GeometricPrior,
                     n_trials: int, master_seed: int, horizon_cap: Optional[int] = None,
                     workers: Optional[int] = None, block_size: int = BLOCK_SIZE,
                     change_time: Optional[int] = -1, z0: Optional[float] = None) -> MetricsEstimate:
    if n_trials < 1000:
        raise ValueError(f"n_trials must be at least 1000, got {n_trials}")
    t = simulate_arrays(policy, model, prior, n_trials, master_seed, horizon_cap,
                        change_time, workers, block_size, z0=z0)
    est = MetricsEstimate.from_arrays(t, prior)
    if est.warning:
        warnings.warn(est.warning, ReliabilityWarning, stacklevel=2)
    return est


# ---------------------------------------------------------------- calibration

@dataclass
class CalibrationResult:
    kind: str
    threshold: float
    threshold_p: Optional[float]
    achieved: float
    achieved_se: float
    target: float
    tolerance: float
    iterations: int
    converged: bool
    metrics: Optional[MetricsEstimate] = field(default=None, repr=False)

    def as_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "metrics"}
        if self.metrics is not None:
            d["metrics"] = self.metrics.as_dict()
        return d


def _threshold_policy(a: float, b: float, eps: Optional[float]) -> Policy:
    if eps is not None:
        return FractionalSampling(a, eps)
    if b == NEG_INF:
        return Shiryaev(a)
    return TwoThreshold.from_log_odds(a, b)


def calibrate_a(target_pfa: float, fixed_b: float, model: ObservationModel, prior: GeometricPrior,
                n_trials: int, tol_rel: float = 0.02, master_seed: int = 0, eps: Optional[float] = None,
                max_iter: int = 60, workers: Optional[int] = None) -> CalibrationResult:
    """Stopping threshold a whose estimated PFA matches ``target_pfa``.

    Uses common random numbers, under which the E[1 - p_tau] estimate is
    pathwise non-increasing in a. Since every 1 - p_tau is below e^{-a}, the
    seed a0 = -log(target) is always an upper bracket.
    """
    if not 0.0 < target_pfa < 0.5:
        raise ValueError(f"target_pfa must lie in (0, 0.5), got {target_pfa}")
    cache: dict[float, MetricsEstimate] = {}

    def pfa(a):
        if a not in cache:
            pol = _threshold_policy(a, fixed_b, eps)
            cache[a] = estimate_metrics(pol, model, prior, n_trials, master_seed, workers=workers)
        return cache[a].pfa

    def done(a, v, it, ok):
        m = cache[a]
        return CalibrationResult("a", a, z_to_p(a), v, m.pfa_se, target_pfa, tol_rel, it, ok, m)

    hi = -math.log(target_pfa)
    f_hi = pfa(hi)
    it = 1
    if abs(f_hi / target_pfa - 1.0) <= tol_rel:
        return done(hi, f_hi, it, True)
    floor = fixed_b + 1e-9 if math.isfinite(fixed_b) else -math.inf
    width = 1.0
    lo = max(hi - width, floor)
    f_lo = pfa(lo)
    it += 1
    while f_lo < target_pfa:
        if lo <= floor or it >= max_iter:
            raise CalibrationError(f"could not bracket PFA {target_pfa:g}: PFA({lo:.4g}) = {f_lo:.3g}")
        width *= 2.0
        lo = max(hi - width, floor)
        f_lo = pfa(lo)
        it += 1
    while it < max_iter:
        # interpolate log PFA, which is close to linear in a, then keep the bracket
        if f_lo > 0 and f_hi > 0 and f_lo != f_hi:
            w = (math.log(f_lo) - math.log(target_pfa)) / (math.log(f_lo) - math.log(f_hi))
            w = min(max(w, 0.1), 0.9)
        else:
            w = 0.5
        mid = lo + w * (hi - lo)
        f_mid = pfa(mid)
        it += 1
        if abs(f_mid / target_pfa - 1.0) <= tol_rel:
            return done(mid, f_mid, it, True)
        if f_mid > target_pfa:
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
        if hi - lo < 1e-9:
            break
    best = min(cache, key=lambda x: abs(cache[x].pfa / target_pfa - 1.0))
    return done(best, cache[best].pfa, it, False)


def _bisect_decreasing(f: Callable[[float], float], lo: float, hi: float, target: float,
                       tol: float, max_iter: int, it: int):
    """Bisection for a function decreasing in its argument; returns (x, f(x), iters, ok)."""
    best = None
    while it < max_iter:
        mid = 0.5 * (lo + hi)
        v = f(mid)
        it += 1
        if best is None or abs(v - target) < abs(best[1] - target):
            best = (mid, v)
        if abs(v - target) <= tol:
            return mid, v, it, True
        if v > target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-9:
            break
    return best[0], best[1], it, False


def calibrate_b(target_ano_percent: float, fixed_a: float, model: ObservationModel,
                prior: GeometricPrior, n_trials: int, tol: float = 1.0, master_seed: int = 0,
                b_min: float = -40.0, max_iter: int = 60,
                workers: Optional[int] = None) -> CalibrationResult:
    """Sampling threshold b whose ANO% (percentage of E[Gamma]) matches the target.

    ANO% decreases in b; ``tol`` is in percentage points.
    """
    if not 0.0 < target_ano_percent < 100.0:
        raise ValueError(f"target ANO% must lie in (0, 100), got {target_ano_percent}")
    cache: dict[float, MetricsEstimate] = {}

    def ano_pct(b):
        if b not in cache:
            pol = TwoThreshold.from_log_odds(fixed_a, b)
            cache[b] = estimate_metrics(pol, model, prior, n_trials, master_seed, workers=workers)
        return cache[b].ano_percent()

    lo, hi = min(-5.0, fixed_a - 1.0), fixed_a - 1e-6
    it = 0
    while ano_pct(lo) < target_ano_percent:
        it += 1
        if lo <= b_min:
            raise CalibrationError(f"ANO% {target_ano_percent:g} unreachable: "
                                   f"{ano_pct(lo):.3g} at b={lo:.3g}")
        lo = max(2.0 * lo, b_min)
    it += 1
    if ano_pct(hi) > target_ano_percent:
        raise CalibrationError(f"ANO% {target_ano_percent:g} unreachable below a: "
                               f"{ano_pct(hi):.3g} at b={hi:.6g}")
    it += 1
    b, v, it, ok = _bisect_decreasing(ano_pct, lo, hi, target_ano_percent, tol, max_iter, it)
    m = cache[b]
    return CalibrationResult("b", b, z_to_p(b), v, m.ano_percent_se(), target_ano_percent, tol,
                             it, ok, m)


def calibrate_eps(target_ano_percent: float, a: float, model: ObservationModel,
                  prior: GeometricPrior, n_trials: int, tol: float = 1.0, master_seed: int = 0,
                  max_iter: int = 60, workers: Optional[int] = None) -> CalibrationResult:
    """Coin probability of fractional sampling at threshold a matching an ANO% target."""
    if not 0.0 < target_ano_percent < 100.0:
        raise ValueError(f"target ANO% must lie in (0, 100), got {target_ano_percent}")
    cache: dict[float, MetricsEstimate] = {}

    def neg_ano(eps):
        if eps not in cache:
            cache[eps] = estimate_metrics(FractionalSampling(a, eps), model, prior, n_trials,
                                          master_seed, workers=workers)
        return -cache[eps].ano_percent()

    if -neg_ano(1.0) < target_ano_percent:
        raise CalibrationError(f"ANO% {target_ano_percent:g} exceeds the always-observe value "
                               f"{-neg_ano(1.0):.3g}")
    eps, v, it, ok = _bisect_decreasing(neg_ano, 0.0, 1.0, -target_ano_percent, tol, max_iter, 1)
    m = cache[eps]
    return CalibrationResult("eps", eps, None, -v, m.ano_percent_se(), target_ano_percent, tol,
                             it, ok, m)


def calibrate_fractional(target_pfa: float, target_ano_percent: float, model: ObservationModel,
                         prior: GeometricPrior, n_trials: int, master_seed: int = 0,
                         tol_rel: float = 0.02, tol: float = 1.0, rounds: int = 4,
                         workers: Optional[int] = None):
    """Alternate a- and eps-calibration until both targets hold; returns (cal_a, cal_eps)."""
    shir = calibrate_a(target_pfa, NEG_INF, model, prior, n_trials, tol_rel, master_seed,
                       workers=workers)
    eps = min(1.0, target_ano_percent / shir.metrics.ano_percent())
    cal_a = cal_e = None
    for _ in range(rounds):
        cal_a = calibrate_a(target_pfa, NEG_INF, model, prior, n_trials, tol_rel, master_seed,
                            eps=eps, workers=workers)
        cal_e = calibrate_eps(target_ano_percent, cal_a.threshold, model, prior, n_trials, tol,
                              master_seed, workers=workers)
        moved = abs(cal_e.threshold - eps)
        eps = cal_e.threshold
        pfa_now = cal_e.metrics.pfa
        if moved < 1e-3 or abs(pfa_now / target_pfa - 1.0) <= tol_rel:
            break
    return cal_a, cal_e


# ---------------------------------------------------------------- experiment drivers

def tradeoff_curve(model: ObservationModel, rho_list, pfa_target: float, ano_percent_list,
                   n_trials: int, master_seed: int = 0, tol_rel: float = 0.02, tol: float = 1.0,
                   workers: Optional[int] = None) -> list[dict]:
    """ADD of gamma(a, b) against Shiryaev at a common PFA, over a grid of ANO% targets."""
    rows = []
    for rho in rho_list:
        prior = GeometricPrior(rho)
        cal_a = calibrate_a(pfa_target, NEG_INF, model, prior, n_trials, tol_rel, master_seed,
                            workers=workers)
        shir = cal_a.metrics
        for target in ano_percent_list:
            cal_b = calibrate_b(target, cal_a.threshold, model, prior, n_trials, tol, master_seed,
                                workers=workers)
            m = cal_b.metrics
            rows.append({
                "rho": rho, "theta": getattr(model, "theta", math.nan),
                "pfa_target": pfa_target, "ano_percent_target": target,
                "a": cal_a.threshold, "b": cal_b.threshold,
                "add": m.add_conditional, "add_se": m.add_conditional_se,
                "pfa": m.pfa, "pfa_se": m.pfa_se,
                "ano_percent": m.ano_percent(), "ano_percent_se": m.ano_percent_se(),
                "add_shiryaev": shir.add_conditional, "add_shiryaev_se": shir.add_conditional_se,
                "pfa_shiryaev": shir.pfa, "ano_percent_shiryaev": shir.ano_percent(),
                "add_ratio": m.add_conditional / shir.add_conditional,
                "converged": cal_a.converged and cal_b.converged,
                "truncated_fraction": max(m.truncated_fraction, shir.truncated_fraction),
            })
            log.info("tradeoff rho=%g ANO%%=%g: b=%.3f ratio=%.3f", rho, target, cal_b.threshold,
                     rows[-1]["add_ratio"])
    return rows


def compare_fractional(model: ObservationModel, rho_list, pfa_target: float, ano_percent: float,
                       n_trials: int, master_seed: int = 0, tol_rel: float = 0.02, tol: float = 1.0,
                       workers: Optional[int] = None) -> list[dict]:
    """gamma(a, b), fractional sampling and Shiryaev at a common PFA (and common ANO%)."""
    rows = []
    for rho in rho_list:
        prior = GeometricPrior(rho)
        cal_a = calibrate_a(pfa_target, NEG_INF, model, prior, n_trials, tol_rel, master_seed,
                            workers=workers)
        shir = cal_a.metrics
        cal_b = calibrate_b(ano_percent, cal_a.threshold, model, prior, n_trials, tol,
                            master_seed, workers=workers)
        fa, fe = calibrate_fractional(pfa_target, ano_percent, model, prior, n_trials,
                                      master_seed, tol_rel, tol, workers=workers)
        g, f = cal_b.metrics, fe.metrics
        rows.append({
            "rho": rho, "theta": getattr(model, "theta", math.nan),
            "pfa_target": pfa_target, "ano_percent_target": ano_percent,
            "a_two_threshold": cal_a.threshold, "b": cal_b.threshold,
            "add_two_threshold": g.add_conditional, "add_two_threshold_se": g.add_conditional_se,
            "pfa_two_threshold": g.pfa, "ano_percent_two_threshold": g.ano_percent(),
            "a_fractional": fa.threshold, "eps": fe.threshold,
            "add_fractional": f.add_conditional, "add_fractional_se": f.add_conditional_se,
            "pfa_fractional": f.pfa, "ano_percent_fractional": f.ano_percent(),
            "add_shiryaev": shir.add_conditional, "add_shiryaev_se": shir.add_conditional_se,
            "pfa_shiryaev": shir.pfa,
            "relative_gap": f.add_conditional / g.add_conditional - 1.0,
            "converged": cal_a.converged and cal_b.converged and fa.converged and fe.converged,
            "truncated_fraction": max(g.truncated_fraction, f.truncated_fraction,
                                      shir.truncated_fraction),
        })
        log.info("fractional rho=%g: gamma %.2f frac %.2f shiryaev %.2f", rho,
                 g.add_conditional, f.add_conditional, shir.add_conditional)
    return rows


# ---------------------------------------------------------------- output rows

METRIC_COLUMNS = ("config_hash", "policy", "rho", "theta", "a", "b", "eps", "n",
                  "add", "add_se", "add_conditional", "add_conditional_se",
                  "pfa", "pfa_se", "pfa_indicator", "pfa_indicator_se",
                  "ano", "ano_se", "ano1", "ano1_se", "ano_percent", "truncated_fraction")


def metrics_row(policy: Policy, model: ObservationModel, est: MetricsEstimate,
                config_hash: str = "") -> dict:
    d = describe(policy)
    return {
        "config_hash": config_hash, "policy": d["policy"], "rho": est.rho,
        "theta": getattr(model, "theta", math.nan), "a": d.get("a", math.nan),
        "b": d.get("b", math.nan), "eps": d.get("eps", 1.0 if "a" in d else math.nan),
        "n": est.n_trials, "add": est.add, "add_se": est.add_se,
        "add_conditional": est.add_conditional, "add_conditional_se": est.add_conditional_se,
        "pfa": est.pfa, "pfa_se": est.pfa_se, "pfa_indicator": est.pfa_indicator,
        "pfa_indicator_se": est.pfa_indicator_se, "ano": est.ano, "ano_se": est.ano_se,
        "ano1": est.ano1, "ano1_se": est.ano1_se, "ano_percent": est.ano_percent(),
        "truncated_fraction": est.truncated_fraction,
    }
