import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gapfolio.errors import NonPositive, ParameterOrdering
from gapfolio.market import (BASELINE, EQUAL_RATES, MarketParams, check_c1_conditions, clamp_A,
                             validate_params)

finite = st.floats(-50, 50, allow_nan=False)


def test_baseline_constants():
    c = validate_params(BASELINE)
    # hand arithmetic: a = excess/variance, theta = s2 a^2 - 2r, k = max(2 s2 a1 + 4 s2 a1^2, theta1)
    assert c.a1 == pytest.approx(1.3)
    assert c.a2 == pytest.approx(0.7)
    assert c.theta1 == pytest.approx(0.1 * 1.69 - 0.04)
    assert c.theta2 == pytest.approx(0.1 * 0.49 - 0.16)
    assert c.k == pytest.approx(0.26 + 0.676)
    assert c.kappa == pytest.approx(0.3 + 0.1 * 4.9 * 2.3)
    assert (c.theta1, c.theta2, c.k, c.kappa) == pytest.approx((0.129, -0.111, 0.936, 1.427))


def test_equal_rates_constants():
    c = validate_params(EQUAL_RATES)
    assert c.a1 == c.a2 == pytest.approx(1.0)
    assert c.theta1 == pytest.approx(0.0, abs=1e-15)
    assert c.theta2 == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("changes, err", [
    ({"mu": 0.05}, ParameterOrdering),
    ({"mu": 0.08}, ParameterOrdering),
    ({"r1": 0.09}, ParameterOrdering),
    ({"sigma2": 0.0}, NonPositive),
    ({"d": -1.0}, NonPositive),
    ({"T": 0.0}, NonPositive),
])
def test_validation_rejects(changes, err):
    with pytest.raises(err):
        validate_params(BASELINE.replace(**changes))


def test_validation_errors_are_value_errors():
    with pytest.raises(ValueError):
        validate_params(BASELINE.replace(mu=0.01))


def test_clamp_examples():
    c = validate_params(BASELINE)
    assert clamp_A(-1.0, c) == pytest.approx(1.0)
    assert clamp_A(-2.0, c) == pytest.approx(1.3)
    assert clamp_A(0.5, c) == pytest.approx(0.7)
    assert isinstance(clamp_A(0.0, c), float)
    np.testing.assert_allclose(clamp_A(np.array([-1.0, -2.0, 0.5]), c), [1.0, 1.3, 0.7])


@given(finite, finite)
def test_clamp_monotone_lipschitz_bounded(x1, x2):
    c = validate_params(BASELINE)
    lo, hi = sorted((x1, x2))
    A_lo, A_hi = clamp_A(lo, c), clamp_A(hi, c)
    assert A_lo >= A_hi
    assert abs(A_lo - A_hi) <= abs(hi - lo) + 1e-15
    assert c.a2 <= A_lo <= c.a1 and c.a2 <= A_hi <= c.a1


@given(finite)
def test_clamp_constant_without_gap(xi):
    c = validate_params(EQUAL_RATES)
    assert clamp_A(xi, c) == pytest.approx(c.a1)


@given(st.floats(-0.05, 0.1), st.floats(0.0, 0.1), st.floats(0.01, 0.5))
def test_theta_gap_nonnegative(r1, gap, s2):
    p = MarketParams(r1=r1, r2=r1 + gap, mu=r1 + gap + 0.05, sigma2=s2)
    c = validate_params(p)
    assert c.theta1 - c.theta2 >= -1e-12
    assert c.a1 >= c.a2 > 0


def test_c1_baseline_fails_on_cd1():
    rep = check_c1_conditions(BASELINE)
    assert rep.CD1.residual == pytest.approx(-0.091)
    assert not rep.CD1.passed and not rep.passed
    assert rep.CD0.passed


def test_c1_all_pass():
    rep = check_c1_conditions(MarketParams(r1=0.02, r2=0.0205, mu=0.06, sigma2=0.07))
    a1, a2 = 0.04 / 0.07, 0.0395 / 0.07
    assert rep.CD1.residual == pytest.approx(0.07 * a2**2 + 0.02 - 0.041)
    assert rep.CD2.residual == pytest.approx(1 + 0.04 / 0.04 - 2 * a1 + a2)
    assert rep.CD1.residual == pytest.approx(0.00129, abs=5e-6)
    assert rep.CD2.residual == pytest.approx(1.4215, abs=5e-4)
    assert rep.passed


def test_c1_negative_mu_flags_cd0():
    rep = check_c1_conditions(MarketParams(r1=-0.05, r2=-0.02, mu=-0.01, sigma2=0.10))
    assert not rep.CD0.passed
    assert [r.name for r in rep] == ["CD0", "CD1", "CD2"]


def test_discounted_target():
    assert BASELINE.discounted_target(0.0) == pytest.approx(10 * math.exp(-0.06))
    assert BASELINE.discounted_target(3.0) == pytest.approx(10.0)
