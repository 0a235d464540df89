"""Marginal likelihoods and log posteriors of the hyper-parameters.

All quantities are computed in log space.  Hyper-parameters are handled on
the ``alpha`` scale: ``alpha = log A`` for the Gaussian model and
``alpha = -log r`` for the Poisson and Binomial models.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy import linalg, special

from .errors import ConfigError, DomainError, MatrixError, OptimizationError
from .models import ModelKind
from .stat_math import digamma_rising, log_rising, trigamma_rising

LOG_2PI = math.log(2 * math.pi)


@dataclass(frozen=True)
class HyperPriorFamily:
    """Hyper-prior density f(r, beta) proportional to 1 / (t + r)^(u + 1).

    The default ``t=0, u=1`` is dr / r^2, i.e. 1/r uniform on (0, inf).
    """

    t: float = 0.0
    u: float = 1.0

    def __post_init__(self):
        if not (self.t >= 0 and self.u > 0):
            raise ConfigError(f"hyper-prior needs t >= 0 and u > 0, got t={self.t}, u={self.u}")

    @property
    def is_default(self):
        return self.t == 0.0 and self.u == 1.0

    def log_density_alpha(self, alpha):
        """Log prior density of alpha = -log r, Jacobian |dr/dalpha| = r included."""
        log_r = -alpha
        log_t_plus_r = log_r if self.t == 0 else np.logaddexp(math.log(self.t), log_r)
        return log_r - (self.u + 1.0) * log_t_plus_r


# ---------------------------------------------------------------------------
# Gaussian
# ---------------------------------------------------------------------------

def gaussian_log_marginal(d, A, beta=None):
    """log L(A, beta) with the random effects integrated out."""
    if A < 0:
        raise DomainError("A must be non-negative")
    mu_e = d.expected_effect(beta)
    s = A + d.V
    return float(np.sum(-0.5 * (LOG_2PI + np.log(s)) - (d.y - mu_e) ** 2 / (2 * s)))


def gaussian_gls(d, A):
    """Weighted least squares at fixed A: (beta_hat, Sigma_hat).

    ``Sigma_hat = (X' D^-1 X)^-1`` with ``D = diag(V + A)``.
    """
    X = d.X
    w = 1.0 / (d.V + A)
    info = X.T @ (X * w[:, None])
    try:
        c = linalg.cho_factor(info)
    except linalg.LinAlgError as exc:
        raise MatrixError("X' D^-1 X is singular") from exc
    beta = linalg.cho_solve(c, X.T @ (w * d.y))
    Sigma = linalg.cho_solve(c, np.eye(X.shape[1]))
    return beta, Sigma


def gaussian_log_integrated(d, alpha):
    """log of the likelihood of A = e^alpha with beta integrated out (flat prior)."""
    A = math.exp(alpha)
    if d.known_mean:
        return gaussian_log_marginal(d, A)
    beta, Sigma = gaussian_gls(d, A)
    _, logdet = np.linalg.slogdet(Sigma)
    return gaussian_log_marginal(d, A, beta) + 0.5 * d.m * LOG_2PI + 0.5 * logdet


# ---------------------------------------------------------------------------
# Poisson
# ---------------------------------------------------------------------------

def poisson_log_marginal(d, r):
    """Sum of negative-binomial log pmfs; requires known prior means."""
    if not r > 0:
        raise DomainError("r must be positive")
    lam = d.prior_mean
    y, n = d.y, d.se_or_n
    a = r * lam
    # log B = -log1p(n/r),  log(1 - B) = log(n/(r+n))
    log_b = -np.log1p(n / r)
    log_1mb = np.log(n) - np.log(r + n)
    terms = log_rising(a, y) - special.gammaln(y + 1) + y * log_1mb + a * log_b
    return float(np.sum(terms))


# ---------------------------------------------------------------------------
# Binomial
# ---------------------------------------------------------------------------

def _log_choose(n, y):
    return special.gammaln(n + 1) - special.gammaln(y + 1) - special.gammaln(n - y + 1)


def binomial_log_marginal(d, r, beta=None, p_e=None):
    """Sum of beta-binomial log pmfs at (r, beta)."""
    if not r > 0:
        raise DomainError("r must be positive")
    p = d.expected_effect(beta) if p_e is None else p_e
    y, n = d.y, d.se_or_n
    a, b = r * p, r * (1 - p)
    # log B(y + a, n - y + b) - log B(a, b) via rising factorials
    terms = (_log_choose(n, y) + log_rising(a, y) + log_rising(b, n - y) - log_rising(a + b, n))
    return float(np.sum(terms))


def binomial_beta_derivs(d, r, beta):
    """Exact gradient and Hessian of the beta-binomial log-likelihood in beta."""
    X = d.X
    p = special.expit(X @ beta)
    q = 1.0 - p
    y, n = d.y, d.se_or_n
    g = digamma_rising(r * p, y) - digamma_rising(r * q, n - y)
    h = trigamma_rising(r * p, y) + trigamma_rising(r * q, n - y)
    pq = p * q
    d1 = r * pq * g
    d2 = r * ((1.0 - 2.0 * p) * pq * g + r * pq * pq * h)
    return X.T @ d1, X.T @ (X * d2[:, None])


@dataclass(frozen=True)
class BetaProfile:
    beta_hat: np.ndarray
    Sigma_hat: np.ndarray
    loglik: float
    laplace_log_marginal: float
    iterations: int


def binomial_profile_beta(d, alpha, beta0=None, max_iter=200, tol=1e-10):
    """Maximise log L(alpha, beta) over beta and Laplace-integrate beta out.

    Damped Newton with step halving, started at ``beta0`` (zeros by default).
    """
    r = math.exp(-alpha)
    m = d.m
    beta = np.zeros(m) if beta0 is None else np.array(beta0, dtype=float)
    f = binomial_log_marginal(d, r, beta)
    it = 0
    for it in range(1, max_iter + 1):
        g, H = binomial_beta_derivs(d, r, beta)
        negH = -H
        lam = 0.0
        scale = max(1.0, float(np.max(np.abs(np.diag(negH)))))
        while True:
            try:
                c = linalg.cho_factor(negH + lam * np.eye(m))
                break
            except linalg.LinAlgError:
                lam = 1e-8 * scale if lam == 0 else lam * 10
                if lam > 1e12 * scale:
                    raise OptimizationError("Hessian in beta cannot be regularised", last=beta)
        step = linalg.cho_solve(c, g)
        t = 1.0
        while True:
            cand = beta + t * step
            fc = binomial_log_marginal(d, r, cand)
            if fc >= f - 1e-12 * max(1.0, abs(f)) or t < 1e-10:
                break
            t *= 0.5
        moved = np.max(np.abs(cand - beta))
        beta, f = cand, fc
        if moved < tol * (1.0 + np.max(np.abs(beta))) and lam == 0.0:
            break
    else:
        raise OptimizationError(f"Newton over beta did not converge in {max_iter} iterations",
                                last=beta)
    _, H = binomial_beta_derivs(d, r, beta)
    try:
        c = linalg.cho_factor(-H)
    except linalg.LinAlgError as exc:
        raise MatrixError("negative Hessian in beta is not positive definite at the mode") from exc
    Sigma = linalg.cho_solve(c, np.eye(m))
    logdet_sigma = -2.0 * float(np.sum(np.log(np.diag(c[0]))))
    lap = f + 0.5 * m * LOG_2PI + 0.5 * logdet_sigma
    return BetaProfile(beta, Sigma, f, lap, it)


# ---------------------------------------------------------------------------
# Hyper-parameter posterior on the alpha scale
# ---------------------------------------------------------------------------

class HyperPosterior:
    """Callable log f(alpha | y) for a dataset, up to an additive constant.

    Gaussian: alpha + log of the beta-integrated marginal (flat priors on A
    and beta, alpha = log A).  Poisson/Binomial: log L(alpha) plus the log
    hyper-prior of alpha under ``fam`` (alpha for the default family); the
    Binomial likelihood with unknown beta is the Laplace-integrated one.
    The Binomial profile warm-starts each Newton run from the last beta.
    """

    def __init__(self, d, fam=None):
        self.d = d
        self.fam = fam or HyperPriorFamily()
        if d.kind is ModelKind.GAUSSIAN and not self.fam.is_default:
            raise ConfigError("the (t, u) hyper-prior family applies to Poisson/Binomial models only")
        self._beta = None

    def __call__(self, alpha):
        d = self.d
        if d.kind is ModelKind.GAUSSIAN:
            return alpha + gaussian_log_integrated(d, alpha)
        prior = float(self.fam.log_density_alpha(alpha))
        r = math.exp(-alpha)
        if d.kind is ModelKind.POISSON:
            return poisson_log_marginal(d, r) + prior
        if d.known_mean:
            return binomial_log_marginal(d, r) + prior
        prof = self.profile(alpha)
        return prof.laplace_log_marginal + prior

    def profile(self, alpha):
        prof = binomial_profile_beta(self.d, alpha, beta0=self._beta)
        self._beta = prof.beta_hat
        return prof


def log_hyper_posterior(d, h, fam=None):
    """log f(alpha | y) at ``h.alpha`` (beta integrated out where unknown)."""
    return HyperPosterior(d, fam)(h.alpha)


def binomial_log_joint(d, alpha, beta, fam=None):
    """log f(alpha, beta | y) up to a constant: log L(r, beta) + log prior(alpha)."""
    fam = fam or HyperPriorFamily()
    r = math.exp(-alpha)
    ll = binomial_log_marginal(d, r, beta if not d.known_mean else None)
    return ll + float(fam.log_density_alpha(alpha))


def binomial_log_joint_many(d, alpha, beta=None, fam=None):
    """Vectorised :func:`binomial_log_joint` over draws.

    ``alpha`` has shape (N,) and ``beta`` shape (N, m); non-finite values
    (r under- or overflowing) are returned as ``-inf``.
    """
    fam = fam or HyperPriorFamily()
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    with np.errstate(over="ignore", under="ignore", divide="ignore", invalid="ignore"):
        r = np.exp(-alpha)[:, None]
        if d.known_mean:
            p = np.broadcast_to(d.prior_mean, (alpha.size, d.k))
        else:
            p = special.expit(np.asarray(beta, dtype=float).reshape(alpha.size, d.m) @ d.X.T)
        y, n = d.y[None, :], d.se_or_n[None, :]
        a, b = r * p, r * (1.0 - p)
        ok = np.all((a > 0) & (b > 0) & np.isfinite(a) & np.isfinite(b), axis=1)
        out = np.full(alpha.size, -np.inf)
        if np.any(ok):
            a, b = a[ok], b[ok]
            yy, nn = np.broadcast_to(y, a.shape), np.broadcast_to(n, a.shape)
            terms = (_log_choose(nn, yy) + log_rising(a, yy) + log_rising(b, nn - yy)
                     - log_rising(a + b, nn))
            out[ok] = np.sum(terms, axis=1) + fam.log_density_alpha(alpha[ok])
    out[~np.isfinite(out)] = -np.inf
    return out
