import math

import numpy as np
import pytest

from gapfolio import frontier as fr
from gapfolio.dual_transform import LegendrePoint, legendre_V
from gapfolio.errors import NegativeVarianceResidual, OutOfRange
from gapfolio.market import BASELINE, EQUAL_RATES

from conftest import closed_form_V


def closed_form_Vd(p, x, t):
    r, tau = p.r1, p.T - t
    theta = (p.mu - r) ** 2 / p.sigma2 - 2 * r
    return 2 * math.exp(-theta * tau) * math.exp(-r * tau) * (p.d * math.exp(-r * tau) - x)


def test_equal_rates_sensitivity(equal_ds):
    exact = closed_form_Vd(EQUAL_RATES, 1.0, 0.0)
    assert exact == pytest.approx(2 * 0.860708 * 7.60708, rel=1e-6)
    # the quoted 13.0955 carries rounding from its inputs
    assert exact == pytest.approx(13.0955, abs=1e-3)
    got = fr.value_sensitivity(equal_ds, 1.0, 0.0)
    assert got == pytest.approx(exact, rel=1e-4)
    pt = legendre_V(equal_ds, 1.0, 0.0)
    assert got == pytest.approx((2 * pt.V[0] - pt.V_x[0]) / 10)


def test_terminal_sensitivity(equal_ds):
    assert fr.value_sensitivity(equal_ds, 4.0, 3.0) == pytest.approx(12.0, abs=1e-3)


@pytest.mark.parametrize("x, d", [(1.0, 10.0), (3.0, 8.0), (-1.0, 12.0)])
def test_routes_agree(x, d):
    p = BASELINE.replace(d=d)
    ds = fr._surface(p)
    homog = fr.value_sensitivity(ds, x, 0.5)
    fd = fr.value_sensitivity_fd(p, x, 0.5)
    assert abs(homog - fd) <= max(1e-3 * abs(homog), 1e-6)


@pytest.mark.parametrize("lam", [0.5, 2.0])
def test_scaling_law(lam):
    err = fr.homogeneity_error(BASELINE, [-2.0, 0.0, 1.0, 4.0, 7.0], 0.0, lam=lam)
    assert err < 5e-3


def test_equal_rates_frontier_point():
    (pt,) = fr.efficient_frontier(EQUAL_RATES, 1.0, 0.0, [10.0])
    V = float(closed_form_V(EQUAL_RATES, 1.0, 0.0))
    Vd = closed_form_Vd(EQUAL_RATES, 1.0, 0.0)
    z_exact, sd_exact = 10 - Vd / 2, math.sqrt(V - Vd**2 / 4)
    assert (z_exact, sd_exact) == pytest.approx((3.4522, 3.8725), abs=5e-4)
    assert (pt.z_mean, pt.std_dev) == pytest.approx((z_exact, sd_exact), abs=1e-3)
    assert pt.z_mean == pytest.approx(3.4522, abs=5e-3)
    assert pt.std_dev == pytest.approx(3.8725, abs=5e-3)
    assert pt.d == 10.0 and not pt.flagged


def test_riskless_anchor():
    anchor = math.exp(0.06)
    pts = fr.efficient_frontier(BASELINE, 1.0, 0.0, [anchor * 1.002, anchor * 1.02])
    assert pts[0].std_dev < 0.01
    assert pts[0].z_mean == pytest.approx(anchor, abs=5e-3)
    assert pts[0].std_dev < pts[1].std_dev


def test_default_grid_frontier_monotone():
    grid = fr.default_d_grid(BASELINE, 1.0, 0.0)
    assert grid.size == 25
    assert grid[0] == pytest.approx(1.1 * math.exp(0.06))
    assert grid[-1] == pytest.approx(8 * math.exp(0.06))
    pts = fr.efficient_frontier(BASELINE, 1.0, 0.0)
    z = np.array([q.z_mean for q in pts])
    sd = np.array([q.std_dev for q in pts])
    assert np.all(np.diff(z) > 0) and np.all(np.diff(sd) >= 0)
    assert np.all(z > math.exp(0.06))
    assert np.all(z < np.array([q.d for q in pts]))


def test_homogeneity_matches_per_target_solves():
    ds = [3.0, 6.0, 10.0]
    a = fr.efficient_frontier(BASELINE, 1.0, 0.0, ds)
    b = fr.efficient_frontier(BASELINE, 1.0, 0.0, ds, homogeneity=False)
    for p, q in zip(a, b):
        assert p.V == pytest.approx(q.V, rel=1e-4)
        assert p.z_mean == pytest.approx(q.z_mean, abs=1e-4)


def test_validate_flag_runs():
    pts = fr.efficient_frontier(BASELINE, 1.0, 0.0, [5.0, 9.0], validate=True)
    assert len(pts) == 2


def test_domain_errors():
    with pytest.raises(OutOfRange):
        fr.efficient_frontier(BASELINE, 1.0, 0.0, [1.0])
    with pytest.raises(OutOfRange):
        fr.efficient_frontier(BASELINE, 1.0, 4.0, [5.0])
    with pytest.raises(OutOfRange):
        fr.default_d_grid(BASELINE, -1.0, 0.0)


def test_negative_residual(monkeypatch):
    def fake(ds, x, t, clip=False):
        one = np.array([1.0])
        return LegendrePoint(V=0.01 * one, V_x=-50 * one, V_xx=one, J=50 * one, rho=one)

    monkeypatch.setattr(fr, "legendre_V", fake)
    with pytest.raises(NegativeVarianceResidual):
        fr.efficient_frontier(BASELINE, 1.0, 0.0, [5.0])


def test_csv():
    pts = [fr.FrontierPoint(10.0, 57.0, 13.0, 3.5, 3.9)]
    text = fr.frontier_csv(pts, header_comment="config_hash=z").splitlines()
    assert text == ["# config_hash=z", "d,V,V_d,z_mean,std_dev", "10,57,13,3.5,3.9"]
