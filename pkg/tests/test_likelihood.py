import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special, stats

from gbp.errors import ConfigError, DomainError
from gbp.likelihood import (HyperPosterior, HyperPriorFamily, binomial_beta_derivs, binomial_log_joint,
                            binomial_log_joint_many, binomial_log_marginal, binomial_profile_beta,
                            gaussian_gls, gaussian_log_integrated, gaussian_log_marginal,
                            poisson_log_marginal)
from gbp.models import Dataset


# ---------------------------------------------------------------------------
# Gaussian
# ---------------------------------------------------------------------------

@given(st.floats(-50, 50), st.floats(0.01, 100), st.floats(0, 100), st.floats(-50, 50))
def test_gaussian_single_group_is_normal_logpdf(y, V, A, mu):
    d = Dataset.build("gaussian", [y], [math.sqrt(V)], prior_mean=mu)
    ref = stats.norm.logpdf(y, mu, math.sqrt(V + A))
    assert gaussian_log_marginal(d, A) == pytest.approx(ref, rel=1e-12, abs=1e-12)


def test_gaussian_doubling_data_doubles_loglik():
    d1 = Dataset.build("gaussian", [1.0, -2.0, 0.3], [1.0, 2.0, 0.5], prior_mean=0.1)
    d2 = Dataset.build("gaussian", [1.0, -2.0, 0.3] * 2, [1.0, 2.0, 0.5] * 2, prior_mean=0.1)
    assert gaussian_log_marginal(d2, 1.7) == pytest.approx(2 * gaussian_log_marginal(d1, 1.7), rel=1e-14)


def test_gaussian_negative_A_rejected(schools):
    with pytest.raises(DomainError):
        gaussian_log_marginal(schools, -1.0)


@pytest.mark.parametrize("alpha", [-2.0, 2.0, 4.77, 7.0])
def test_gaussian_integrated_matches_quadrature(schools, alpha):
    # flat prior on the intercept: integrate L(A, beta) over beta numerically
    A = math.exp(alpha)
    beta_hat, Sigma = gaussian_gls(schools, A)
    s = math.sqrt(Sigma[0, 0])
    peak = gaussian_log_marginal(schools, A, beta_hat)
    val, _ = integrate.quad(lambda b: math.exp(gaussian_log_marginal(schools, A, np.array([b])) - peak),
                            beta_hat[0] - 12 * s, beta_hat[0] + 12 * s, epsabs=0, epsrel=1e-12)
    assert gaussian_log_integrated(schools, alpha) == pytest.approx(peak + math.log(val), abs=1e-9)


def test_gaussian_gls_matches_weighted_lstsq(rng):
    k = 12
    x = rng.normal(size=k)
    se = rng.uniform(0.5, 2.0, size=k)
    y = 1.0 + 0.5 * x + rng.normal(size=k) * se
    d = Dataset.build("gaussian", y, se, covariates=x)
    A = 0.7
    w = 1 / np.sqrt(se**2 + A)
    ref, *_ = np.linalg.lstsq(d.X * w[:, None], y * w, rcond=None)
    beta, Sigma = gaussian_gls(d, A)
    np.testing.assert_allclose(beta, ref, rtol=1e-12)
    np.testing.assert_allclose(Sigma, np.linalg.inv(d.X.T @ (d.X * (w**2)[:, None])), rtol=1e-12)


def test_gaussian_equal_variances_gls_is_sample_mean():
    y = [2.0, 5.0, -1.0, 4.0]
    d = Dataset.build("gaussian", y, [1.5] * 4)
    beta, Sigma = gaussian_gls(d, 0.75)
    assert beta[0] == pytest.approx(np.mean(y), rel=1e-14)
    assert Sigma[0, 0] == pytest.approx((1.5**2 + 0.75) / 4, rel=1e-14)


# ---------------------------------------------------------------------------
# Poisson
# ---------------------------------------------------------------------------

@given(st.integers(0, 200), st.floats(0.1, 500), st.floats(1e-3, 1.0), st.floats(1e-3, 1e4))
def test_poisson_matches_negative_binomial(y, n, lam, r):
    d = Dataset.build("poisson", [y], [n], prior_mean=lam)
    ref = stats.nbinom.logpmf(y, r * lam, r / (r + n))
    assert poisson_log_marginal(d, r) == pytest.approx(ref, rel=1e-9, abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.floats(1.0, 100), st.floats(0.01, 0.2), st.floats(0.05, 1e3))
def test_poisson_pmf_normalises(n, lam, r):
    # the negative-binomial tail decays like (n / (r + n))^y
    top = int(n * lam + 50 + 40 / math.log1p(r / n))
    total = math.fsum(math.exp(poisson_log_marginal(Dataset.build("poisson", [y], [n], prior_mean=lam), r))
                      for y in range(top))
    assert total == pytest.approx(1.0, abs=1e-9)


def test_poisson_large_r_limit():
    d = Dataset.build("poisson", [0, 3, 7], [20.0, 67.0, 150.0], prior_mean=0.03)
    ref = np.sum(stats.poisson.logpmf(d.y, d.n * 0.03))
    assert poisson_log_marginal(d, 1e8) == pytest.approx(ref, abs=1e-5)


def test_poisson_rejects_nonpositive_r(hospital):
    with pytest.raises(DomainError):
        poisson_log_marginal(hospital, 0.0)


# ---------------------------------------------------------------------------
# Binomial
# ---------------------------------------------------------------------------

@given(st.integers(1, 300), st.floats(0.001, 0.999), st.floats(1e-3, 1e5), st.data())
def test_binomial_matches_beta_binomial(n, p, r, data):
    y = data.draw(st.integers(0, n))
    d = Dataset.build("binomial", [y], [n], prior_mean=p)
    ref = stats.betabinom.logpmf(y, n, r * p, r * (1 - p))
    assert binomial_log_marginal(d, r) == pytest.approx(ref, rel=1e-9, abs=1e-9)


@settings(max_examples=40)
@given(st.integers(1, 150), st.floats(0.01, 0.99), st.floats(1e-2, 1e4))
def test_binomial_pmf_normalises(n, p, r):
    total = math.fsum(math.exp(binomial_log_marginal(Dataset.build("binomial", [y], [n], prior_mean=p), r))
                      for y in range(n + 1))
    assert total == pytest.approx(1.0, abs=1e-10)


def test_binomial_large_r_limit():
    d = Dataset.build("binomial", [1, 5, 9], [10, 20, 30], prior_mean=0.25)
    ref = np.sum(stats.binom.logpmf(d.y, d.n, 0.25))
    assert binomial_log_marginal(d, 1e8) == pytest.approx(ref, abs=1e-5)


def test_binomial_symmetric_profile_gives_zero_intercept():
    d = Dataset.build("binomial", [2, 8, 3, 7, 5], [10, 10, 10, 10, 10])
    prof = binomial_profile_beta(d, -1.0)
    assert abs(prof.beta_hat[0]) < 1e-10


def test_binomial_profile_at_baseball_mode(baseball):
    prof = binomial_profile_beta(baseball, -4.72697)
    se = np.sqrt(np.diag(prof.Sigma_hat))
    np.testing.assert_allclose(prof.beta_hat, [-1.194, 0.389], atol=2e-3)
    np.testing.assert_allclose(prof.beta_hat / se, [-9.129, 2.074], atol=5e-3)


def _grid_log_integral(d, alpha, prof, width=8.0, n=401):
    se = np.sqrt(np.diag(prof.Sigma_hat))
    g0 = prof.beta_hat[0] + np.linspace(-width, width, n) * se[0]
    g1 = prof.beta_hat[1] + np.linspace(-width, width, n) * se[1]
    B0, B1 = np.meshgrid(g0, g1, indexing="ij")
    betas = np.column_stack([B0.ravel(), B1.ravel()])
    alphas = np.full(betas.shape[0], alpha)
    flat_prior = HyperPriorFamily(t=0.0, u=1.0)
    # the joint includes the alpha prior; subtract it to get log L(r, beta)
    ll = binomial_log_joint_many(d, alphas, betas, flat_prior) - float(flat_prior.log_density_alpha(alpha))
    peak = ll.max()
    vals = np.exp(ll - peak).reshape(n, n)
    inner = integrate.simpson(vals, x=g1, axis=1)
    return peak + math.log(integrate.simpson(inner, x=g0))


def test_laplace_beta_integral_close_to_quadrature(baseball):
    # 18 groups with n = 45: the Laplace error is a fraction of a percent
    alpha = -4.72697
    prof = binomial_profile_beta(baseball, alpha)
    exact = _grid_log_integral(baseball, alpha, prof)
    assert abs(prof.laplace_log_marginal - exact) < 1e-2


def test_laplace_tightens_with_more_data():
    rng = np.random.default_rng(7)
    k = 60
    x = rng.normal(size=k)
    n = np.full(k, 400)
    p = special.expit(-1.0 + 0.4 * x)
    y = rng.binomial(n, p)
    d = Dataset.build("binomial", y, n, covariates=x)
    # larger r means more information about beta per group
    errs = []
    for alpha in (-4.0, -8.0):
        prof = binomial_profile_beta(d, alpha)
        errs.append(abs(prof.laplace_log_marginal - _grid_log_integral(d, alpha, prof)))
    assert errs[0] < 5e-3 and errs[1] < 5e-4 and errs[1] < errs[0]


def test_beta_derivatives_match_finite_differences(baseball):
    r = 110.0
    beta = np.array([-1.1, 0.3])
    g, H = binomial_beta_derivs(baseball, r, beta)
    h = 1e-5
    g_fd = np.empty(2)
    H_fd = np.empty((2, 2))
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        g_fd[i] = (binomial_log_marginal(baseball, r, beta + e) - binomial_log_marginal(baseball, r, beta - e)) / (2 * h)
        gp, _ = binomial_beta_derivs(baseball, r, beta + e)
        gm, _ = binomial_beta_derivs(baseball, r, beta - e)
        H_fd[:, i] = (gp - gm) / (2 * h)
    np.testing.assert_allclose(g, g_fd, rtol=1e-7, atol=1e-7)
    np.testing.assert_allclose(H, H_fd, rtol=1e-6, atol=1e-6)


def test_log_joint_many_matches_scalar(baseball, rng):
    alphas = rng.uniform(-8, -2, size=25)
    betas = rng.normal([-1.2, 0.4], 0.2, size=(25, 2))
    fam = HyperPriorFamily(2.0, 0.5)
    many = binomial_log_joint_many(baseball, alphas, betas, fam)
    ref = [binomial_log_joint(baseball, a, b, fam) for a, b in zip(alphas, betas)]
    np.testing.assert_allclose(many, ref, rtol=1e-12)


def test_log_joint_many_nonfinite_is_minus_inf(baseball):
    out = binomial_log_joint_many(baseball, np.array([-800.0, 800.0]), np.zeros((2, 2)))
    assert np.all(out == -np.inf)


# ---------------------------------------------------------------------------
# Hyper-parameter posterior
# ---------------------------------------------------------------------------

@given(st.floats(-10, 10), st.floats(0, 50), st.floats(0.1, 5))
def test_hyper_prior_density(alpha, t, u):
    fam = HyperPriorFamily(t, u)
    r = math.exp(-alpha)
    assert fam.log_density_alpha(alpha) == pytest.approx(math.log(r) - (u + 1) * math.log(t + r),
                                                         rel=1e-12, abs=1e-12)


def test_default_hyper_prior_is_alpha():
    fam = HyperPriorFamily()
    assert fam.is_default
    for a in (-6.0, 0.0, 3.5):
        assert fam.log_density_alpha(a) == pytest.approx(a, abs=1e-14)


def test_hyper_prior_rejects_bad_parameters():
    with pytest.raises(ConfigError):
        HyperPriorFamily(-1.0, 1.0)
    with pytest.raises(ConfigError):
        HyperPriorFamily(0.0, 0.0)


def test_gaussian_rejects_non_default_family(schools):
    with pytest.raises(ConfigError):
        HyperPosterior(schools, HyperPriorFamily(1.0, 1.0))


@pytest.mark.parametrize("name,mode", [("hospital", -6.53), ("baseball", -4.73), ("schools", 4.77)])
def test_hyper_posterior_grid_argmax(request, name, mode):
    d = request.getfixturevalue(name)
    post = HyperPosterior(d)
    grid = np.linspace(mode - 1.5, mode + 1.5, 301)
    vals = np.array([post(a) for a in grid])
    assert np.all(np.isfinite(vals))
    assert grid[np.argmax(vals)] == pytest.approx(mode, abs=0.02)


def test_hyper_posterior_smooth(baseball):
    # second differences of a smooth function shrink like h^2
    post = HyperPosterior(baseball)
    a = -4.5
    d1 = post(a + 1e-2) - 2 * post(a) + post(a - 1e-2)
    d2 = post(a + 2e-2) - 2 * post(a) + post(a - 2e-2)
    assert d2 / d1 == pytest.approx(4.0, rel=1e-3)
