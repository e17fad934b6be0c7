import math

import numpy as np
import pytest

from onoff_qcd import kernels
from onoff_qcd.montecarlo import default_horizon_cap, run_trial, simulate_reference
from onoff_qcd.observation_model import GaussianMeanShiftModel, GeometricPrior
from onoff_qcd.policy import FractionalSampling, Shiryaev, TwoThreshold

try:
    CY = kernels.get_backend("cython")
except ImportError:  # pragma: no cover - extension not built
    CY = None
PY = kernels.get_backend("python")
needs_cy = pytest.mark.skipif(CY is None, reason="compiled kernels not built")


def _same(x, y):
    if isinstance(x, tuple):
        assert len(x) == len(y)
        for u, v in zip(x, y):
            _same(u, v)
    elif isinstance(x, np.ndarray):
        assert x.dtype == y.dtype
        assert np.array_equal(x, y)
    else:
        assert x == y


@needs_cy
@pytest.mark.parametrize("args", [
    (0.75, 0.01, 0.0, -math.inf, 6.467, -2.2, 1.0, 0, 100_000, -1),
    (2.0, 0.05, 0.3, math.log(0.3 / 0.7), 5.0, -1.0, 1.0, 0, 100_000, -1),
    (0.75, 0.05, 0.0, -math.inf, 4.0, -math.inf, 0.4, 1, 100_000, -1),
    (0.75, 0.05, 0.0, -math.inf, 4.0, 0.0, 1.0, 0, 100_000, 7),
    (0.75, 0.05, 0.0, -math.inf, 4.0, 0.0, 1.0, 0, 50, -2),
])
def test_simulate_trials_parity(args):
    outs = [k.simulate_trials(np.random.default_rng(11), 300, *args) for k in (CY, PY)]
    _same(outs[0], outs[1])


@needs_cy
def test_overshoot_eta_exit_parity():
    for fn, args in ((lambda k, g: k.overshoot(g, 500, 0.75, 0.01, 14.0), None),
                     (lambda k, g: k.eta_samples(g, 300, 0.75, 0.05, -math.inf, 300, 35.0), None),
                     (lambda k, g: k.exit_paths(g, 300, 0.75, False, 0.01, -2.2, -2.2, math.inf, 10 ** 6), None),
                     (lambda k, g: k.exit_paths(g, 300, 0.75, True, 0.01, -2.2, -2.2, 6.0, 10 ** 6), None)):
        a = fn(CY, np.random.default_rng(5))
        b = fn(PY, np.random.default_rng(5))
        _same(a, b)


M = GaussianMeanShiftModel(0.75)
P = GeometricPrior(0.02)


@pytest.mark.parametrize("policy", [TwoThreshold.from_log_odds(5.0, -1.5), Shiryaev(5.0),
                                    FractionalSampling(5.0, 0.35), FractionalSampling(5.0, 0.0)])
@pytest.mark.parametrize("change_time", [-1, 3, None])
def test_reference_path_matches_kernel(policy, change_time):
    cap = 5000 if isinstance(policy, FractionalSampling) and policy.eps == 0.0 else None
    for seed in range(40):
        gen = np.random.default_rng(seed)
        c = cap or default_horizon_cap(policy, M, P)
        ref = simulate_reference(policy, M, P, gen, c, change_time)
        fast = run_trial(policy, M, P, seed, c, change_time)
        assert ref.gamma == fast.gamma
        assert (ref.tau, ref.obs_before, ref.obs_after, ref.truncated) == \
               (fast.tau, fast.obs_before, fast.obs_after, fast.truncated)
        assert ref.one_minus_p_tau == pytest.approx(fast.one_minus_p_tau, rel=1e-12, abs=0)


@pytest.mark.parametrize("seed", range(50))
def test_b_zero_probability_equals_shiryaev(seed):
    a = 6.0
    r1 = run_trial(TwoThreshold.from_probabilities(1 / (1 + math.exp(-a)), 0.0), M, P, seed)
    r2 = run_trial(Shiryaev(a), M, P, seed)
    assert r1 == r2


@pytest.mark.parametrize("seed", range(20))
def test_eps_one_equals_shiryaev(seed):
    assert run_trial(FractionalSampling(5.0, 1.0), M, P, seed) == run_trial(Shiryaev(5.0), M, P, seed)


def test_shiryaev_change_at_one():
    m = GaussianMeanShiftModel(2.0)
    rs = [run_trial(Shiryaev(5.0), m, GeometricPrior(0.01), s, change_time=1) for s in range(200)]
    assert all(r.obs_before == 0 for r in rs)
    assert all(r.gamma == 1 for r in rs)
    assert np.mean([r.delay_plus for r in rs]) < 10


def test_backend_selection():
    assert kernels.BACKEND in ("cython", "python")
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")
