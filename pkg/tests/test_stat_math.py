import math

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy import integrate, stats

from gbp import stat_math as sm
from gbp.errors import DomainError, MatrixError

mpmath.mp.dps = 40

pos = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False)
probs = st.floats(min_value=0.001, max_value=0.999)


# -- gamma / beta functions ---------------------------------------------------

def test_log_gamma_examples():
    assert sm.log_gamma(1.0) == pytest.approx(0.0, abs=1e-15)
    assert sm.log_gamma(0.5) == pytest.approx(0.5723649429247001, rel=1e-14)
    assert sm.log_gamma(10.0) == pytest.approx(math.log(math.factorial(9)), rel=1e-14)


@pytest.mark.parametrize("x", [1e-6, 1e-3, 0.3, 1.7, 12.5, 333.3, 1e4, 1e6])
def test_log_gamma_against_mpmath(x):
    ref = float(mpmath.loggamma(mpmath.mpf(x)))
    assert abs(sm.log_gamma(x) - ref) <= 1e-13 * max(1.0, abs(ref))


@pytest.mark.parametrize("bad", [0.0, -1.0, -0.5])
def test_log_gamma_domain(bad):
    with pytest.raises(DomainError):
        sm.log_gamma(bad)


def test_log_beta_examples():
    assert sm.log_beta(1, 1) == pytest.approx(0.0, abs=1e-15)
    assert sm.log_beta(2, 3) == pytest.approx(math.log(1 / 12), rel=1e-13)
    assert sm.log_beta(0.5, 0.5) == pytest.approx(math.log(math.pi), rel=1e-13)
    with pytest.raises(DomainError):
        sm.log_beta(0, 1)


@given(pos, pos)
def test_log_beta_symmetric(a, b):
    assert sm.log_beta(a, b) == sm.log_beta(b, a)


@pytest.mark.parametrize("x", [1e-3, 0.7, 3.0, 49.9, 50.0, 51.0, 800.0, 1e7, 1e12])
@pytest.mark.parametrize("c", [0.0, 1.0, 7.0, 45.0, 0.25])
def test_rising_helpers_against_mpmath(x, c):
    X, C = mpmath.mpf(x), mpmath.mpf(c)
    lr = float(mpmath.loggamma(X + C) - mpmath.loggamma(X))
    dr = float(mpmath.digamma(X + C) - mpmath.digamma(X))
    tr = float(mpmath.psi(1, X + C) - mpmath.psi(1, X))
    assert sm.log_rising(x, c) == pytest.approx(lr, rel=1e-12, abs=1e-13)
    assert sm.digamma_rising(x, c) == pytest.approx(dr, rel=1e-11, abs=1e-15)
    assert sm.trigamma_rising(x, c) == pytest.approx(tr, rel=1e-10, abs=1e-20)


# -- CDFs and quantiles ---------------------------------------------------------

def test_beta_examples():
    assert sm.beta_cdf(0.5, 1, 1) == pytest.approx(0.5, abs=1e-15)
    assert sm.beta_quantile(0.5, 2, 2) == pytest.approx(0.5, abs=1e-14)
    x = 0.3
    # I_x(2, 5) = P(Binomial(6, x) >= 2)
    poly = sum(math.comb(6, j) * x**j * (1 - x) ** (6 - j) for j in range(2, 7))
    assert sm.beta_cdf(x, 2, 5) == pytest.approx(poly, abs=1e-14)


def test_beta_domain():
    with pytest.raises(DomainError):
        sm.beta_cdf(0.5, 0, 1)
    with pytest.raises(DomainError):
        sm.beta_cdf(1.5, 1, 1)
    with pytest.raises(DomainError):
        sm.beta_quantile(1.2, 1, 1)


def test_gamma_examples():
    for x, r in [(0.3, 1.0), (2.0, 0.5), (7.0, 3.0)]:
        assert sm.gamma_cdf(x, 1, r) == pytest.approx(1 - math.exp(-r * x), abs=1e-15)
    assert sm.gamma_quantile(0.5, 1, 1) == pytest.approx(math.log(2), rel=1e-13)
    erlang = 1 - math.exp(-5) * (1 + 5 + 25 / 2)
    assert sm.gamma_cdf(5, 3, 1) == pytest.approx(erlang, abs=1e-15)
    with pytest.raises(DomainError):
        sm.gamma_cdf(-1, 1, 1)


def test_normal_examples():
    assert sm.normal_cdf(0.0) == 0.5
    assert sm.normal_quantile(0.975) == pytest.approx(1.959963985, abs=1e-9)
    mass, _ = integrate.quad(lambda z: math.exp(-z * z / 2) / math.sqrt(2 * math.pi), -1, 1,
                             epsabs=1e-14)
    assert sm.normal_cdf(1) - sm.normal_cdf(-1) == pytest.approx(mass, abs=1e-12)
    with pytest.raises(DomainError):
        sm.normal_quantile(1.0)


GRID = np.r_[0.001, np.linspace(0.01, 0.99, 50), 0.999]


@pytest.mark.parametrize("a,b", [(0.5, 0.5), (2, 5), (33.9, 3.31), (300, 700)])
def test_beta_round_trip(a, b):
    for p in GRID:
        assert abs(sm.beta_cdf(sm.beta_quantile(p, a, b), a, b) - p) <= 1e-9


@pytest.mark.parametrize("shape,rate", [(0.3, 1.0), (3.0, 2.0), (23.5, 750.0)])
def test_gamma_round_trip(shape, rate):
    for p in GRID:
        assert abs(sm.gamma_cdf(sm.gamma_quantile(p, shape, rate), shape, rate) - p) <= 1e-9


def test_normal_round_trip():
    for p in GRID:
        assert abs(sm.normal_cdf(sm.normal_quantile(p)) - p) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(probs, st.floats(0.05, 50.0), st.floats(0.05, 50.0))
def test_beta_round_trip_property(p, a, b):
    x = sm.beta_quantile(p, a, b)
    # quantiles within one ulp of 0 or 1 are not representable apart from the bound
    assume(0.0 < x < 1.0 - 1e-15)
    err = abs(sm.beta_cdf(x, a, b) - p)
    # where the cdf is steeper than 1e-9 per ulp, demand the best representable x instead
    lo, hi = sm.beta_cdf(np.nextafter(x, 0.0), a, b), sm.beta_cdf(np.nextafter(x, 1.0), a, b)
    assert err <= 1e-9 or (hi - lo > 1e-9 and lo <= p <= hi)


@settings(max_examples=40, deadline=None)
@given(probs, st.floats(0.05, 200.0), st.floats(1e-2, 1e3))
def test_gamma_round_trip_property(p, shape, rate):
    assert abs(sm.gamma_cdf(sm.gamma_quantile(p, shape, rate), shape, rate) - p) <= 1e-9


# -- skew-normal ------------------------------------------------------------------

def test_skew_normal_symmetric_case():
    p = sm.SkewNormalParams(1.5, 2.0, 0.0)
    for x in np.linspace(-6, 9, 31):
        assert sm.skew_normal_cdf(x, p) == pytest.approx(sm.normal_cdf((x - 1.5) / 2.0), abs=1e-10)
        assert sm.skew_normal_pdf(x, p) == pytest.approx(stats.norm.pdf(x, 1.5, 2.0), abs=1e-12)
    assert sm.skew_normal_quantile(0.5, sm.SkewNormalParams(0, 1, 0)) == pytest.approx(0, abs=1e-10)


def test_skew_normal_cdf_monte_carlo():
    delta = 0.8
    g = np.random.default_rng(7)
    u0, u1 = g.standard_normal((2, 10_000_000))
    z = delta * np.abs(u0) + math.sqrt(1 - delta**2) * u1
    mc = np.mean(z <= 0)
    val = sm.skew_normal_cdf(0.0, sm.SkewNormalParams(0, 1, delta))
    assert abs(val - mc) <= 3e-4
    # closed form at the location: 1/2 - arctan(shape)/pi
    shape = delta / math.sqrt(1 - delta**2)
    assert val == pytest.approx(0.5 - math.atan(shape) / math.pi, abs=1e-10)


def test_skew_normal_moments_by_quadrature():
    p = sm.SkewNormalParams(-0.4, 1.7, -0.93)
    mean, var, skew = sm.skew_normal_moments(p)
    f = lambda x, k: x**k * sm.skew_normal_pdf(x, p)
    m1 = integrate.quad(f, -np.inf, np.inf, args=(1,))[0]
    m2 = integrate.quad(lambda x: (x - m1) ** 2 * sm.skew_normal_pdf(x, p), -np.inf, np.inf)[0]
    m3 = integrate.quad(lambda x: (x - m1) ** 3 * sm.skew_normal_pdf(x, p), -np.inf, np.inf)[0]
    assert mean == pytest.approx(m1, abs=1e-9)
    assert var == pytest.approx(m2, rel=1e-9)
    assert skew == pytest.approx(m3 / m2**1.5, rel=1e-7)


@settings(max_examples=25, deadline=None)
@given(probs, st.floats(-5, 5), st.floats(0.1, 20), st.floats(-0.99, 0.99))
def test_skew_normal_round_trip(q, phi, omega, delta):
    p = sm.SkewNormalParams(phi, omega, delta)
    assert abs(sm.skew_normal_cdf(sm.skew_normal_quantile(q, p), p) - q) <= 1e-9


def test_skew_normal_validation():
    with pytest.raises(DomainError):
        sm.SkewNormalParams(0, 0, 0.1)
    with pytest.raises(DomainError):
        sm.SkewNormalParams(0, 1, 1.0)
    with pytest.raises(DomainError):
        sm.skew_normal_quantile(0.0, sm.SkewNormalParams(0, 1, 0))


# -- random streams and samplers ------------------------------------------------------

def test_stream_replay_and_independence():
    a = sm.RngStream(5, 3).generator().random(8)
    b = sm.RngStream(5, 3).generator().random(8)
    c = sm.RngStream(5, 4).generator().random(8)
    d = sm.RngStream(6, 3).generator().random(8)
    assert np.array_equal(a, b)
    assert not np.allclose(a, c) and not np.allclose(a, d)
    s = sm.RngStream(5, 3)
    assert s.child(1) == s.child(1) and s.child(1) != s.child(2)
    with pytest.raises(DomainError):
        sm.RngStream(-1, 0)
    with pytest.raises(DomainError):
        sm.RngStream(0, 2**64)


def test_samplers_deterministic():
    s = sm.RngStream(11, 0)
    assert np.array_equal(sm.sample_gamma(s, 2.0, 3.0, 5), sm.sample_gamma(s, 2.0, 3.0, 5))
    assert np.array_equal(sm.sample_binomial(s, 45, 0.3, 5), sm.sample_binomial(s, 45, 0.3, 5))


def test_sampler_trivial_cases():
    s = sm.RngStream(1, 1)
    assert np.all(sm.sample_binomial(s, 45, 0.0, 100) == 0)
    assert np.all(sm.sample_poisson(s, 0.0, 100) == 0)


def test_sampler_moments():
    s = sm.RngStream(2, 0)
    n = 1_000_000
    assert abs(sm.sample_beta(s, 1, 1, n).mean() - 0.5) < 0.002
    g = sm.sample_gamma(sm.RngStream(2, 1), 3.0, 2.0, n)
    assert abs(g.mean() - 1.5) < 4 * math.sqrt(0.75 / n)
    assert abs(g.var() - 0.75) < 0.01
    x = sm.sample_normal(sm.RngStream(2, 2), 1.0, 2.0, n)
    assert abs(x.mean() - 1.0) < 4 * 2 / math.sqrt(n)
    k = sm.sample_poisson(sm.RngStream(2, 3), 4.0, n)
    assert abs(k.mean() - 4.0) < 4 * 2 / math.sqrt(n)
    b = sm.sample_binomial(sm.RngStream(2, 4), 45, 0.27, n)
    assert abs(b.mean() - 45 * 0.27) < 4 * math.sqrt(45 * 0.27 * 0.73 / n)


def test_sampler_domain():
    s = sm.RngStream(0, 0)
    with pytest.raises(DomainError):
        sm.sample_gamma(s, -1, 1)
    with pytest.raises(DomainError):
        sm.sample_binomial(s, 4.5, 0.5)
    with pytest.raises(DomainError):
        sm.sample_binomial(s, 4, 1.5)
    with pytest.raises(DomainError):
        sm.sample_poisson(s, -1)


# -- skew-t and multivariate t -------------------------------------------------------------

def test_skew_t_transformation_at_half():
    p = sm.SkewTParams(-4.7, 1.2, 2.89, 5.78)
    assert sm.skew_t_from_beta(0.5, p) == pytest.approx(-4.7, abs=1e-15)


def test_skew_t_symmetric_median():
    p = sm.SkewTParams(2.0, 3.0, 4.0, 4.0)
    draws = sm.sample_skew_t(sm.RngStream(3, 0), p, 1_000_000)
    assert abs(np.median(draws) - 2.0) < 0.01 * 3.0


def test_skew_t_empirical_mode():
    a, b = math.log(18), 2 * math.log(18)
    p = sm.SkewTParams(0.0, 1.0, a, b)
    draws = sm.sample_skew_t(sm.RngStream(3, 1), p, 1_000_000)
    expected = sm.skew_t_mode(p)
    assert expected == pytest.approx((a - b) * math.sqrt(a + b) / math.sqrt((2 * a + 1) * (2 * b + 1)))
    # vertex of a parabola through the log counts of a fine histogram around the peak
    edges = np.linspace(expected - 0.4, expected + 0.4, 41)
    counts, _ = np.histogram(draws, edges)
    mids = 0.5 * (edges[1:] + edges[:-1])
    c2, c1, _ = np.polyfit(mids, np.log(counts), 2)
    assert abs(-c1 / (2 * c2) - expected) < 0.05


def test_skew_t_density():
    p = sm.SkewTParams(0.7, 1.9, 2.89, 5.78)
    total, _ = integrate.quad(lambda x: math.exp(sm.skew_t_log_density(x, p)), -np.inf, np.inf,
                              epsabs=1e-12, limit=200)
    assert abs(total - 1) <= 1e-6
    sym = sm.SkewTParams(0.7, 1.9, 3.5, 3.5)
    for x in (-30.0, -2.0, 0.7, 1.3, 55.0):
        ref = stats.t.logpdf(x, df=7.0, loc=0.7, scale=1.9)
        assert sm.skew_t_log_density(x, sym) == pytest.approx(ref, abs=1e-11)


def test_skew_t_density_matches_sampler():
    p = sm.SkewTParams(-1.0, 0.8, 2.0, 4.0)
    draws = sm.sample_skew_t(sm.RngStream(4, 0), p, 200_000)
    edges = np.linspace(-4, 1.5, 23)
    counts, _ = np.histogram(draws, edges)
    probs = [integrate.quad(lambda x: math.exp(sm.skew_t_log_density(x, p)), lo, hi)[0]
             for lo, hi in zip(edges[:-1], edges[1:])]
    expected = np.array(probs) * draws.size
    chi2 = np.sum((counts - expected) ** 2 / expected)
    assert stats.chi2.sf(chi2, len(counts) - 1) > 1e-3


def test_mvt4_density():
    val = sm.mvt4_log_density(np.array([0.0]), np.array([0.0]), np.eye(1))
    ref = math.log(math.gamma(2.5) / (math.gamma(2.0) * math.sqrt(4 * math.pi)))
    assert val == pytest.approx(ref, abs=1e-13)
    total, _ = integrate.quad(lambda v: math.exp(sm.mvt4_log_density(np.array([v]), [0.3], [[2.0]])),
                              -np.inf, np.inf)
    assert total == pytest.approx(1.0, abs=1e-8)
    S = np.array([[0.02, -0.01], [-0.01, 0.03]])
    xi = np.array([-1.2, 0.4])
    pts = np.array([[-1.0, 0.3], [-1.5, 0.9], [0.0, 0.0]])
    ref = stats.multivariate_t(loc=xi, shape=S, df=4).logpdf(pts)
    np.testing.assert_allclose(sm.mvt4_log_density(pts, xi, S), ref, rtol=1e-12)


def test_mvt4_sampler_covariance():
    S = np.array([[1.0, 0.3], [0.3, 0.5]])
    draws = sm.sample_mvt4(sm.RngStream(9, 0), [1.0, -1.0], S, 400_000)
    # covariance of t4 is 2 S; median is the location
    np.testing.assert_allclose(np.median(draws, axis=0), [1.0, -1.0], atol=0.01)
    np.testing.assert_allclose(np.cov(draws.T), 2 * S, rtol=0.08)


def test_mvt4_rejects_bad_scale():
    with pytest.raises(MatrixError):
        sm.mvt4_log_density([0, 0], [0, 0], [[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(MatrixError):
        sm.mvt4_log_density([0, 0], [0, 0], [[1.0, 0.5], [0.4, 1.0]])
