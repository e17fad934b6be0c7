import math
import warnings

import numpy as np
import pytest

from onoff_qcd import montecarlo as mc
from onoff_qcd.observation_model import GaussianMeanShiftModel, GeometricPrior
from onoff_qcd.policy import FractionalSampling, Shiryaev, TwoThreshold

M = GaussianMeanShiftModel(0.75)
P = GeometricPrior(0.01)


def test_block_generators_are_independent_of_scheduling():
    a = mc.run_blocked(lambda g, m: g.random(m), 10_000, 42, 0, block_size=1000, workers=1)
    b = mc.run_blocked(lambda g, m: g.random(m), 10_000, 42, 0, block_size=1000, workers=6)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert [x.size for x in a] == [1000] * 10
    c = mc.run_blocked(lambda g, m: g.random(m), 10_000, 42, 1, block_size=1000, workers=1)
    assert not np.array_equal(a[0], c[0])


def test_determinism_across_workers():
    pol = TwoThreshold.from_log_odds(5.0, -2.0)
    e1 = mc.estimate_metrics(pol, M, P, 20_000, 7, workers=1, block_size=1024)
    e4 = mc.estimate_metrics(pol, M, P, 20_000, 7, workers=4, block_size=1024)
    assert e1.as_dict() == e4.as_dict()
    e5 = mc.estimate_metrics(pol, M, P, 20_000, 8, workers=1, block_size=1024)
    assert e5.as_dict() != e1.as_dict()


@pytest.mark.parametrize("a,b,rho", [(4.6, -2.2, 0.01), (3.0, 0.0, 0.01), (4.0, -3.0, 0.1)])
def test_pfa_estimators_agree(a, b, rho):
    est = mc.estimate_metrics(TwoThreshold.from_log_odds(a, b), M, GeometricPrior(rho), 100_000, 3)
    assert est.pfa >= 1e-3
    assert abs(est.pfa - est.pfa_indicator) <= 3 * math.hypot(est.pfa_se, est.pfa_indicator_se)


def test_ano_non_increasing_in_b():
    anos = [mc.estimate_metrics(TwoThreshold.from_log_odds(6.467, b), M, P, 20_000, 1).ano
            for b in (-4.0, -2.2, -1.0, 0.0, 1.5)]
    assert all(x >= y for x, y in zip(anos, anos[1:]))


def test_table_row_metrics():
    est = mc.estimate_metrics(TwoThreshold.from_log_odds(6.467, -2.2), M, P, 100_000, 0)
    assert est.ano == pytest.approx(34.92, rel=0.05)
    assert est.ano1 == pytest.approx(27.86, rel=0.05)
    assert est.add_conditional == pytest.approx(32.3, rel=0.05)
    assert est.truncated_fraction == 0.0
    assert est.n_conditional <= est.n_trials


def test_shiryaev_observes_almost_everything():
    est = mc.estimate_metrics(Shiryaev(6.467), M, P, 20_000, 0)
    assert est.ano_percent() > 95.0
    assert est.ano_percent() == pytest.approx(100 * (1 - P.rho), abs=2.0)


def test_ano_percent_arithmetic():
    est = mc.MetricsEstimate(add=0, add_se=0, add_conditional=0, add_conditional_se=0, pfa=0,
                             pfa_se=0, pfa_indicator=0, pfa_indicator_se=0, ano=15.0, ano_se=0.1,
                             ano1=0, ano1_se=0, ano_unconditional=0, ano_unconditional_se=0,
                             n_trials=1, n_conditional=1, truncated_fraction=0.0, rho=0.05)
    assert est.ano_percent() == pytest.approx(75.0)
    assert est.ano_percent_se() == pytest.approx(0.5)


def test_eps_one_column_equals_shiryaev():
    f = mc.estimate_metrics(FractionalSampling(5.0, 1.0), M, GeometricPrior(0.05), 20_000, 2)
    s = mc.estimate_metrics(Shiryaev(5.0), M, GeometricPrior(0.05), 20_000, 2)
    assert abs(f.add_conditional - s.add_conditional) <= 2 * s.add_conditional_se
    assert f.as_dict() == s.as_dict()


def test_min_trials_and_cap_checks():
    with pytest.raises(ValueError):
        mc.estimate_metrics(Shiryaev(5.0), M, P, 999, 0)
    with pytest.raises(ValueError):
        mc.estimate_metrics(Shiryaev(5.0), M, P, 1000, 0, horizon_cap=10)


def test_default_cap():
    cap = mc.default_horizon_cap(Shiryaev(6.467), M, P)
    assert cap == math.ceil(20 / 0.01 + 40 * 6.467 / (0.28125 - math.log1p(-0.01)))


def test_truncation_warning():
    n = 2000
    t = mc.TrialArrays(gamma=np.full(n, 5, np.int64), tau=np.full(n, 9, np.int64),
                       obs_before=np.zeros(n, np.int64), obs_after=np.zeros(n, np.int64),
                       one_minus_p=np.zeros(n), truncated=np.r_[np.ones(5), np.zeros(n - 5)].astype(np.uint8))
    est = mc.MetricsEstimate.from_arrays(t, P)
    assert est.truncated_fraction == pytest.approx(2.5e-3)
    assert est.warning and "horizon cap" in est.warning


def test_no_change_trials():
    # pre-change drift is downward, so some trials never stop and hit the cap
    with pytest.warns(mc.ReliabilityWarning):
        est = mc.estimate_metrics(Shiryaev(3.0), M, GeometricPrior(0.05), 2000, 0, change_time=None)
    assert est.truncated_fraction > mc.TRUNCATION_WARN
    # every stop is a false alarm
    assert est.pfa_indicator == 1.0
    assert est.n_conditional == 0
    assert math.isnan(est.add_conditional)


def test_calibrate_a_self_consistent():
    m1, p = GaussianMeanShiftModel(1.0), GeometricPrior(0.01)
    res = mc.calibrate_a(1e-4, -math.inf, m1, p, 20_000, tol_rel=0.02, master_seed=5)
    assert res.converged
    assert res.threshold <= -math.log(1e-4)
    again = mc.estimate_metrics(Shiryaev(res.threshold), m1, p, 100_000, 99)
    assert again.pfa == pytest.approx(1e-4, rel=0.10)


def test_calibrate_a_two_threshold():
    res = mc.calibrate_a(1e-3, -2.2, M, P, 20_000, master_seed=1)
    assert res.converged and abs(res.achieved / 1e-3 - 1) <= 0.02
    assert res.as_dict()["kind"] == "a"


def test_calibrate_b():
    res = mc.calibrate_b(30.0, 6.9, M, GeometricPrior(0.05), 20_000, tol=1.0, master_seed=4)
    assert res.converged
    assert abs(res.achieved - 30.0) <= 1.0
    assert res.threshold < 6.9


def test_calibrate_b_unreachable():
    # under conditioning on tau >= Gamma, ANO% cannot exceed about 100 (1 - rho)
    with pytest.raises(mc.CalibrationError):
        mc.calibrate_b(85.0, 5.0, M, GeometricPrior(0.3), 2000, master_seed=0, b_min=-20)


def test_calibrate_eps():
    res = mc.calibrate_eps(50.0, 6.0, M, GeometricPrior(0.05), 20_000, tol=1.0, master_seed=0)
    assert res.converged and 0 < res.threshold < 1
    with pytest.raises(mc.CalibrationError):
        mc.calibrate_eps(99.0, 6.0, M, GeometricPrior(0.05), 2000)


def test_tradeoff_near_full_observation():
    rows = mc.tradeoff_curve(M, [0.01], 1e-3, [97.0], 20_000, master_seed=2)
    assert len(rows) == 1
    r = rows[0]
    assert r["converged"]
    assert r["add_ratio"] == pytest.approx(1.0, abs=0.05)


def test_metrics_row_columns():
    pol = TwoThreshold.from_log_odds(5.0, -2.0)
    est = mc.estimate_metrics(pol, M, P, 2000, 0)
    row = mc.metrics_row(pol, M, est, "abc")
    assert set(mc.METRIC_COLUMNS) <= set(row)
    assert row["config_hash"] == "abc" and row["policy"] == "two-threshold"


def test_z0_override_shortens_delay():
    pol = TwoThreshold.from_log_odds(6.467, -2.2)
    base = mc.estimate_metrics(pol, M, P, 20_000, 0)
    high = mc.estimate_metrics(pol, M, P, 20_000, 0, z0=-2.2)
    assert high.pfa > base.pfa
