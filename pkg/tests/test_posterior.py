import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, assume, strategies as st

from onoff_qcd.observation_model import GaussianMeanShiftModel
from onoff_qcd.posterior import (BeliefState, ThresholdPair, one_minus_p, p_grid_phi_take, p_to_z,
                                 phi_skip, phi_take, t_bounds, t_closed_form, t_exact, z_skip,
                                 z_skip_iterate, z_take, z_to_p)

rhos = st.floats(1e-4, 0.5)


def test_phi_skip_examples():
    assert phi_skip(0.0, 0.01) == pytest.approx(0.01)
    assert phi_skip(1.0, 0.3) == 1.0
    assert phi_skip(0.2, 0.05) == pytest.approx(0.24)


@given(st.floats(0, 1), rhos)
def test_phi_skip_range(p, rho):
    q = phi_skip(p, rho)
    assert q >= p
    assert rho - 1e-15 <= q <= 1.0


def test_phi_take_symmetry_and_absorbing():
    m = GaussianMeanShiftModel(0.75)
    assert phi_take(0.375, 0.3, 0.02, m) == pytest.approx(phi_skip(0.3, 0.02), rel=1e-14)
    assert phi_take(-3.0, 1.0, 0.02, m) == 1.0


def test_phi_take_matches_z_route():
    m = GaussianMeanShiftModel(0.75)
    p = phi_take(1.0, 0.2, 0.01, m)
    z = z_take(1.0, p_to_z(0.2), 0.01, m)
    assert abs(p - z_to_p(z)) < 1e-10


def test_z_skip_from_minus_inf():
    assert z_skip(-math.inf, 0.01) == pytest.approx(math.log(0.01 / 0.99), abs=1e-12)
    assert z_skip(-math.inf, 0.01) == pytest.approx(-4.59512, abs=1e-5)


def test_z_skip_geometric_identity_one_step():
    z1 = z_skip(0.0, 0.05)
    assert math.exp(z1) + 1 == pytest.approx(2 / 0.95, rel=1e-12)


def test_z_skip_iterates_increase():
    z = -4.59512
    for _ in range(100):
        z2 = z_skip(z, 0.01)
        assert z2 > z
        z = z2


def _identity_error(z0, rho, k):
    z = z0
    for _ in range(k):
        z = z_skip(z, rho)
    lhs = np.logaddexp(0.0, z)
    rhs = np.logaddexp(0.0, z0) - k * math.log1p(-rho)
    # relative error of e^Z + 1
    return abs(math.expm1(lhs - rhs)), z


@given(st.floats(-30, 30), st.floats(1e-4, 0.02), st.integers(1, 10_000))
def test_geometric_identity_k_steps(z0, rho, k):
    err, z = _identity_error(z0, rho, k)
    assert err < 1e-10
    assert z_skip_iterate(z0, rho, k) == pytest.approx(z, rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("rho", [0.1, 0.3, 0.5])
def test_geometric_identity_precision_floor(rho):
    # for large k rho the log-odds is in the thousands and each step rounds at ulp(z);
    # the error is then bounded by the accumulated rounding, not by 1e-10
    k = 10_000
    err, z = _identity_error(0.0, rho, k)
    assert err < k * np.spacing(z)


def test_z_take_symmetry():
    m = GaussianMeanShiftModel(0.75)
    assert z_take(0.375, 0.0, 0.01, m) == z_skip(0.0, 0.01)


@given(st.floats(-25, 25), st.floats(-10, 10), rhos, st.floats(0.05, 3.0))
def test_z_take_equals_p_route(z, x, rho, theta):
    m = GaussianMeanShiftModel(theta)
    p = z_to_p(z)
    # near p = 1 the probability route itself loses digits in 1 - p
    assume(1e-6 < p < 1 - 1e-6)
    zz = z_take(x, z, rho, m)
    pp = phi_take(x, p, rho, m)
    assert abs(z_to_p(zz) - pp) < 1e-9


def test_domain_equivalence_random_pairs():
    rng = np.random.default_rng(0)
    m = GaussianMeanShiftModel(0.75)
    for _ in range(10_000):
        z = rng.uniform(-20, 20)
        x = rng.normal(0.375, 2.0)
        assert abs(z_to_p(z_take(x, z, 0.01, m)) - phi_take(x, z_to_p(z), 0.01, m)) < 1e-9


@given(st.lists(st.tuples(st.booleans(), st.floats(-4, 4)), min_size=1, max_size=60), rhos)
def test_mixed_sequences_agree(seq, rho):
    m = GaussianMeanShiftModel(0.75)
    p, z = 0.3, p_to_z(0.3)
    for take, x in seq:
        if take:
            p, z = phi_take(x, p, rho, m), z_take(x, z, rho, m)
        else:
            p, z = phi_skip(p, rho), z_skip(z, rho)
        if not (1e-12 < p < 1 - 1e-12):
            break
        assert abs(z_to_p(z) - p) < 1e-9


@given(st.floats(1e-9, 1 - 1e-9))
def test_round_trip(p):
    assert abs(z_to_p(p_to_z(p)) - p) < 1e-12
    s = BeliefState.from_p(p)
    assert s.z == p_to_z(p)


def test_sentinels():
    assert p_to_z(0.0) == -math.inf
    assert z_to_p(-math.inf) == 0.0
    assert one_minus_p(-math.inf) == 1.0
    assert one_minus_p(800.0) == pytest.approx(math.exp(-800.0), rel=1e-12)
    with pytest.raises(ValueError):
        BeliefState.from_p(1.5)


def test_threshold_pair():
    tp = ThresholdPair.from_probabilities(0.98, 0.2)
    assert tp.a == pytest.approx(math.log(49.0))
    assert tp.b == pytest.approx(math.log(0.25))
    assert ThresholdPair.from_probabilities(0.9, 0.0).b == -math.inf
    assert ThresholdPair(50.0, 1.0).A == 1.0
    with pytest.raises(ValueError):
        ThresholdPair.from_probabilities(0.5, 0.5)
    with pytest.raises(ValueError):
        ThresholdPair(1.0, 2.0)
    with pytest.raises(ValueError):
        ThresholdPair(math.inf, 0.0)


def _t_rational(x_p: Fraction, y_p: Fraction, rho: Fraction) -> int:
    # independent oracle: exact rational skip recursion in the probability domain
    k, p = 0, x_p
    while not p > y_p:
        p = p + (1 - p) * rho
        k += 1
    return k


@pytest.mark.parametrize("x_p,y_p,rho", [(Fraction(0), Fraction(1, 5), Fraction(1, 100)),
                                         (Fraction(1, 2), Fraction(9, 10), Fraction(1, 20)),
                                         (Fraction(1, 10), Fraction(99, 100), Fraction(1, 3))])
def test_t_exact_against_rational_oracle(x_p, y_p, rho):
    x = p_to_z(float(x_p))
    y = p_to_z(float(y_p))
    assert t_exact(x, y, float(rho)) == _t_rational(x_p, y_p, rho)


def test_t_exact_examples():
    assert t_exact(1.1, 1.0, 0.01) == 0
    # rho = 1/2: e^{Z_k} + 1 = 2^(k+1) from Z_0 = 0; first exceeds e^5 + 1 at k = 7
    assert t_exact(0.0, 5.0, 0.5) == 7
    assert 2 ** 8 - 1 > math.exp(5) > 2 ** 7 - 1


def test_t_example_b02():
    y = math.log(0.25)
    k = t_exact(-math.inf, y, 0.01)
    assert k == 23
    lo, hi = t_bounds(-math.inf, y, 0.01)
    assert lo < k <= hi
    assert t_closed_form(-math.inf, y, 0.01) == pytest.approx(math.log(1.25) / -math.log(0.99), rel=1e-12)
    assert t_closed_form(-math.inf, y, 0.01) == pytest.approx(22.20, abs=0.01)


def test_t_closed_form_zero():
    assert t_closed_form(0.3, 0.3, 0.1) == 0.0
    assert t_closed_form(2.0, 1.0, 0.1) == 0.0


@given(st.floats(-30, 20) | st.just(-math.inf), st.floats(-20, 25), st.floats(1e-3, 0.05))
def test_t_closed_form_within_one(x, y, rho):
    assume(x <= y)
    k = t_exact(x, y, rho)
    assert abs(t_closed_form(x, y, rho) - k) <= 1 + rho * k


def test_t_bracket_random_inputs():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        rho = 10 ** rng.uniform(-3, -0.3)
        y = rng.uniform(-15, 15)
        x = -math.inf if rng.random() < 0.2 else y - rng.exponential(5.0)
        k = t_exact(x, y, rho)
        lo, hi = t_bounds(x, y, rho)
        assert lo < k <= hi + 1e-9


def test_printed_constant_bracket_is_violated():
    # the alternative constant -(1 - rho) in the closed form gives an upper bound below the truth
    rho, y = 0.01, math.log(0.25)
    c = -math.log1p(-rho)
    upper_alt = (math.log(1 + math.exp(y) * (1 + rho * math.exp(-y)) / (1 - rho) - rho)) / c
    assert t_exact(-math.inf, y, rho) > upper_alt


def test_p_grid_phi_take_matches_scalar():
    m = GaussianMeanShiftModel(1.0)
    p = np.linspace(0, 1, 7)
    x = np.array([-1.0, 0.5, 2.0])
    g = p_grid_phi_take(x, p, 0.05, m)
    for i, pi in enumerate(p):
        for j, xj in enumerate(x):
            assert g[i, j] == pytest.approx(phi_take(xj, pi, 0.05, m), abs=1e-14)
