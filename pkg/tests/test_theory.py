import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, optimize, special

from erwsa.model import MemorySchedule
from erwsa.theory import (
    KAPPA1_BOUNDS,
    bessel_smallest_zero,
    c0_constant,
    chung_constants,
    cov_TC,
    cov_TS,
    erw_summary,
    gamma_product,
    gamma_product_closed,
    gamma_sequence,
    kappa_bracket,
    lil_constants,
    rate_bound,
    rpw_clt_variance,
    rpw_mean,
    rpw_mean_sequence,
    xi_constant_general,
    xi_moments,
    xi_second_moment,
)
from erwsa.walkers import RpwConfig


def test_cov_TS_examples():
    assert cov_TS(0.2, 1, 0, 1).entry("T", "T") == pytest.approx(1 / 0.6)
    assert np.allclose(cov_TS(0.0, 1, 0, 1).base, [[1, 1], [1, 1]])
    assert cov_TS(0.8, 2, 1, 2).entry("T", "T") == pytest.approx((1 + 4 / 0.6) / 2)
    full = cov_TS(0.8, 2, 1, 2).full()
    assert full.shape == (4, 4) and full[0, 1] == 0 and full[2, 2] == pytest.approx(3.8333333333333335)


def test_critical_branch_is_explicit():
    with pytest.raises(ValueError):
        cov_TS(0.5, 1, 0, 1)
    with pytest.raises(ValueError):
        cov_TC(Fraction(1, 2), 1, 0, 1)
    with pytest.raises(ValueError):
        cov_TS(0.3, 1, 0, 1, critical=True)
    assert np.allclose(cov_TS(0.5, 2, 0, 1, critical=True).base, [[1, 2], [2, 4]])


def test_cov_TC_examples():
    assert np.allclose(cov_TC(0.0, 1, 0, 1).base, [[1, 0.5], [0.5, 1 / 3]])
    assert cov_TC(0.5, 2, 0, 1, critical=True).entry("C", "C") == pytest.approx(16 / 9)
    assert cov_TC(0.8, 1, 0, 1).entry("C", "C") == pytest.approx(2 / (3 * 0.6 * 1.8))
    assert cov_TC(0.8, 1, 0, 1).entry("C", "C") == pytest.approx(0.61728, abs=5e-6)


def _kernel(rho):
    """Covariance kernel of the Gaussian limit of T (with mu = 1, sigma = 0), s <= t."""
    if rho < 0.5:
        return lambda s, t: (s * t) ** rho * min(s, t) ** (1 - 2 * rho) / (1 - 2 * rho)
    return lambda s, t: (s * t) ** rho * max(s, t) ** (1 - 2 * rho) / (2 * rho - 1)


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
@pytest.mark.parametrize("rho", [0.2, -0.3, 0.8, 0.95])
@pytest.mark.parametrize("mu,sigma", [(1.0, 0.0), (1.5, 0.7)])
def test_cov_TC_against_quadrature(rho, mu, sigma):
    K = _kernel(rho)
    opts = {"epsabs": 1e-10, "epsrel": 1e-10}
    gg = integrate.dblquad(lambda s, t: K(s, t), 0, 1, 0, 1, **opts)[0]
    g1 = integrate.quad(lambda t: K(t, 1.0), 0, 1, **opts)[0]
    tt = sigma**2 + mu**2 * K(1.0, 1.0)
    tc = sigma**2 / 2 + mu**2 * g1
    cc = sigma**2 / 3 + mu**2 * gg
    base = cov_TC(rho, mu, sigma, 1).base
    assert np.allclose(base, [[tt, tc], [tc, cc]], rtol=1e-7)
    assert cov_TC(rho, mu, sigma, 3).entry("C", "C") == pytest.approx(cc / 3, rel=1e-7)


def test_cov_TC_critical_against_quadrature():
    # critical kernel after dividing by log n: K(s, t) -> sqrt(st), the limit of (T_{nt}, C) scaling
    gg = integrate.dblquad(lambda s, t: math.sqrt(s * t), 0, 1, 0, 1)[0]
    g1 = integrate.quad(lambda t: math.sqrt(t), 0, 1)[0]
    assert np.allclose(cov_TC(0.5, 1, 0, 1, critical=True).base, [[1, g1], [g1, gg]])


@settings(max_examples=200)
@given(st.floats(-1, 1), st.floats(-5, 5), st.floats(0, 5), st.integers(1, 6))
def test_covariances_symmetric_psd(rho, mu, sigma, d):
    if abs(rho - 0.5) < 1e-9:
        return
    for cov in (cov_TS(rho, mu, sigma, d), cov_TC(rho, mu, sigma, d)):
        full = cov.full()
        assert np.allclose(full, full.T)
        assert np.linalg.eigvalsh(full).min() >= -1e-9 * max(1.0, np.abs(full).max())


@given(st.floats(0, 0.7499))
def test_regime_continuity_d1(p):
    rho = 2 * p - 1
    assert abs(cov_TS(rho, 1, 0, 1).entry("T", "T") - 1 / (3 - 4 * p)) <= 1e-12 * (1 / (3 - 4 * p))


def test_lil_examples():
    assert lil_constants(0.0, 1, 0, 1)["lil_T"] == pytest.approx(1.0)
    assert lil_constants(0.5, 1, 0, 4, critical=True)["lil_C"] == pytest.approx(1 / 3)
    assert lil_constants(0.25, 1, 1, 1)["lil_T"] == pytest.approx(math.sqrt(3))
    assert lil_constants(0.5, 1, 0, 4, critical=True)["lil_T"] == pytest.approx(0.5)


def _scipy_first_zero(nu):
    xs = np.linspace(1e-6, 40, 40001)
    v = special.jv(nu, xs)
    i = np.nonzero(np.sign(v[:-1]) != np.sign(v[1:]))[0][0]
    return optimize.brentq(lambda x: special.jv(nu, x), xs[i], xs[i + 1], xtol=1e-15)


def test_bessel_examples():
    assert bessel_smallest_zero(-0.5) == pytest.approx(math.pi / 2, abs=1e-12)
    assert bessel_smallest_zero(0.5) == pytest.approx(math.pi, abs=1e-12)
    assert bessel_smallest_zero(0.0) == pytest.approx(2.404825557695773, abs=1e-12)


@pytest.mark.parametrize("nu", [-0.5, 0.0, 0.5, 1.0, 1.5, 2.0, 3.5, 7.0, 12.5, 20.0])
def test_bessel_against_scipy(nu):
    assert abs(bessel_smallest_zero(nu) - _scipy_first_zero(nu)) < 1e-10
    if nu == int(nu):
        assert abs(bessel_smallest_zero(nu) - special.jn_zeros(int(nu), 1)[0]) < 1e-10


def test_chung_examples():
    c = chung_constants(1, 1.0)
    assert c.chung_T == pytest.approx(math.pi / (2 * math.sqrt(2)))
    assert c.chung_T == pytest.approx(1.11072, abs=5e-6)
    assert chung_constants(1, 4.0).chung_T == pytest.approx(2 * c.chung_T)
    assert chung_constants(1, 1.0, kappa=3 / 8).chung_C == pytest.approx(1.125**1.5)
    assert chung_constants(1, 1.0, kappa=3 / 8).chung_C == pytest.approx(1.19324, abs=5e-6)
    lo, hi = c.chung_C
    assert lo < hi
    with pytest.raises(ValueError):
        chung_constants(1, 0.0)


def test_kappa_bracket():
    assert kappa_bracket(1) == KAPPA1_BOUNDS
    assert KAPPA1_BOUNDS[0] == 0.375 and KAPPA1_BOUNDS[1] == pytest.approx(1.277, abs=5e-4)
    assert kappa_bracket(2)[1] == pytest.approx(2 ** (4 / 3) * KAPPA1_BOUNDS[1])


def test_gamma_product_examples():
    assert gamma_product(5, 4, 0.7) == 1.0
    assert gamma_product(2, 4, 0.5) == pytest.approx(1.640625, rel=1e-15)
    for rho in (0.1, 0.5, 0.8, 0.99):
        assert gamma_product(2, 1000, rho) == pytest.approx(math.gamma(2) * math.exp(math.lgamma(1001 + rho) - math.lgamma(1001)) / math.gamma(2 + rho), rel=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 50), st.integers(0, 10**4), st.floats(-0.9, 1.0))
def test_gamma_product_methods_agree(m, extra, rho):
    n = m - 1 + extra
    a = gamma_product(m, n, rho, "direct")
    b = gamma_product(m, n, rho, "log")
    assert a == pytest.approx(b, rel=1e-12)
    assert a == pytest.approx(gamma_product_closed(m, n, rho), rel=1e-10)


def test_gamma_product_schedule_forms():
    arr = np.linspace(0.3, 0.9, 60)
    f = lambda i: float(arr[i])
    assert gamma_product(3, 50, arr) == pytest.approx(gamma_product(3, 50, f), rel=1e-15)
    seq = gamma_sequence(50, arr)
    assert seq[40] == pytest.approx(gamma_product(2, 39, arr), rel=1e-12)


def test_c0_limit():
    for rho in (0.6, 0.8, 1.0):
        n = 10**6
        assert gamma_product(2, n - 1, rho) / n**rho == pytest.approx(c0_constant(rho), rel=1e-5)


def test_xi_examples():
    assert xi_second_moment(0.75, 1) == pytest.approx(1 / (0.5 * math.sqrt(math.pi) / 2))
    assert xi_second_moment(0.75, 1) == pytest.approx(2.256758, abs=5e-7)
    assert xi_second_moment(1.0, 1) == pytest.approx(1.0)
    assert xi_second_moment(0.8, 2) == pytest.approx(1 / (2 * 0.6 * special.gamma(1.6)), rel=1e-14)
    # the quoted 0.93267 is a rounded hand value; the exact one is 0.932646
    assert xi_second_moment(0.8, 2) == pytest.approx(0.93267, abs=3e-5)
    assert xi_moments(0.8, 1)["mean"] == 0.0
    with pytest.raises(ValueError):
        xi_second_moment(0.4, 1)


def test_xi_constant_general_reduces_to_closed_form():
    for p, d in ((0.9, 1), (0.85, 2), (1.0, 1)):
        s = MemorySchedule.constant(p)
        r = xi_constant_general(s, d)
        exact = xi_second_moment(s.rho(d), d)
        assert r["per_coordinate"] == pytest.approx(exact, rel=1e-5)
        assert r["error"] < 1e-4


def test_xi_constant_general_varying_schedule_is_finite():
    s = MemorySchedule.power_law(0.9, -0.2, 0.6)
    r = xi_constant_general(s, 1)
    assert 0 < r["per_coordinate"] and r["error"] < 1e-3 * r["per_coordinate"] + 1e-6


def test_rate_bound():
    r = rate_bound(10**4, MemorySchedule.constant(0.9), 1)
    assert r["value"] == pytest.approx(1e4 ** (0.5 - 0.8))
    assert r["tail_sum"] == 0


def _mean_recursion(n, cfg):
    pA, pB, p0 = Fraction(cfg.pA), Fraction(cfg.pB), Fraction(cfg.p0)
    a0 = cfg.W0 + cfg.B0
    rho, qB = pA + pB - 1, 1 - pB
    w = Fraction(cfg.W0)
    for k in range(1, n + 1):
        x = p0 if a0 + k - 1 == 0 else w / (a0 + k - 1)
        w = w + x * pA + (1 - x) * qB
        del rho
        rho = pA + pB - 1
    return w


@pytest.mark.parametrize("pA,pB,W0,B0,p0", [(0.9, 0.7, 1, 1, 0.5), (0.6, 0.6, 0, 0, 1.0), (0.3, 0.8, 2, 5, 0.1), (0.5, 0.5, 0, 0, 0.2)])
def test_rpw_mean_matches_recursion(pA, pB, W0, B0, p0):
    cfg = RpwConfig(pA, pB, W0, B0, p0, 100, 0, 1)
    for n in (1, 2, 7, 60):
        assert rpw_mean(n, cfg, exact=True) == _mean_recursion(n, cfg)
        assert rpw_mean(n, cfg) == pytest.approx(float(_mean_recursion(n, cfg)), rel=1e-12)
    seq = rpw_mean_sequence(60, cfg, exact=True)
    assert seq[60] == _mean_recursion(60, cfg)


def test_rpw_mean_examples():
    assert rpw_mean(2, RpwConfig(0.9, 0.7, 1, 1, 0.5, 2, 0, 1)) == pytest.approx(2.22)
    assert rpw_mean(1, RpwConfig(0.7, 0.7, 0, 0, 1.0, 1, 0, 1)) == pytest.approx(0.7)


def test_rpw_mean_asymptotics():
    cfg = RpwConfig(0.9, 0.7, 1, 1, 0.5, 10**5, 0, 1)
    vals = [(rpw_mean(n, cfg) - (2 + n) * cfg.v) / n**cfg.rho for n in (10**3, 10**4, 10**5)]
    assert abs(vals[2] - vals[1]) < abs(vals[1] - vals[0]) + 1e-12
    assert abs(vals[2] - vals[1]) < 1e-3 * abs(vals[2])


def test_rpw_clt_variance_examples():
    assert rpw_clt_variance(0.5, 0.5).variance == pytest.approx(0.25)
    r = rpw_clt_variance(0.9, 0.6)
    assert r.regime == "critical" and r.variance == pytest.approx(0.16)
    assert rpw_clt_variance(0.9, 0.8).variance is None
    assert rpw_clt_variance(0.2, 0.7).variance == pytest.approx(rpw_clt_variance(0.7, 0.2).variance)
    with pytest.raises(ValueError):
        rpw_clt_variance(1.0, 0.4)


def test_erw_summary():
    s = erw_summary(0.6, 1, 1.0, 0.0)
    assert s["variance_S"] == pytest.approx(1 / 0.6) and s["regime"] == "diffusive"
    assert "xi_second_moment" in erw_summary(0.9, 1, 1.0, 0.0)
    assert erw_summary(0.75, 1, 1.0, 0.0)["regime"] == "critical"
