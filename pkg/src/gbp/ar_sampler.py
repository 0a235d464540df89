"""Acceptance-rejection sampling of the Binomial hyper-posterior.

The envelope is a product of a Jones-Faddy skew-t for alpha and a
multivariate t with four degrees of freedom for beta, both centred on the
joint posterior mode.  Accepted (alpha, beta) pairs are followed by exact
Beta draws of every random effect.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from . import stat_math as sm
from .config import RunConfig
from .errors import EnvelopeError, SamplerError
from .likelihood import HyperPriorFamily, binomial_log_joint, binomial_log_joint_many
from .models import ModelKind

MAX_REFILLS = 20
REFILL_MULTIPLIER = 6


@dataclass(frozen=True, eq=False)
class EnvelopeSpec:
    """g1 (skew-t on alpha) and g2 (t4 on beta, absent when m = 0)."""

    g1: sm.SkewTParams
    xi: np.ndarray | None
    S: np.ndarray | None
    psi: float
    mode: np.ndarray

    @property
    def m(self):
        return 0 if self.xi is None else self.xi.size

    def log_density(self, alpha, beta=None):
        out = np.asarray(sm.skew_t_log_density(alpha, self.g1), dtype=float)
        if self.m:
            out = out + sm.mvt4_log_density(beta, self.xi, self.S)
        return out

    def sample(self, stream, size):
        rng = sm._rng(stream)
        alpha = np.atleast_1d(sm.sample_skew_t(rng, self.g1, size))
        beta = sm.sample_mvt4(rng, self.xi, self.S, size) if self.m else np.empty((size, 0))
        return alpha, beta


def tail_parameters(k):
    """(a, b) = (k, 2k) for k < 10, else (ln k, 2 ln k)."""
    if k < 10:
        return float(k), 2.0 * k
    a = math.log(k)
    return a, 2.0 * a


def _fd_hessian(f, x, step):
    n = x.size
    H = np.empty((n, n))
    f0 = f(x)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = step[i]
        H[i, i] = (f(x + ei) - 2.0 * f0 + f(x - ei)) / step[i] ** 2
        for j in range(i):
            ej = np.zeros(n)
            ej[j] = step[j]
            H[i, j] = H[j, i] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej)
                                 + f(x - ei - ej)) / (4.0 * step[i] * step[j])
    return H


def _fd_gradient(f, x, step):
    g = np.empty(x.size)
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = step[i]
        g[i] = (f(x + e) - f(x - e)) / (2.0 * step[i])
    return g


def joint_mode(d, fam, start, max_iter=100, tol=1e-8):
    """Newton ascent on log f(alpha, beta | y) with central-difference derivatives."""
    m = 0 if d.known_mean else d.m

    def f(theta):
        return binomial_log_joint(d, theta[0], theta[1:] if m else None, fam)

    theta = np.asarray(start, dtype=float).copy()
    fx = f(theta)
    for _ in range(max_iter):
        step = 1e-5 * np.maximum(1.0, np.abs(theta))
        g = _fd_gradient(f, theta, step)
        H = _fd_hessian(f, theta, step)
        try:
            L = np.linalg.cholesky(-H)
            delta = np.linalg.solve(L.T, np.linalg.solve(L, g))
        except np.linalg.LinAlgError:
            delta = g / max(1.0, float(np.max(np.abs(np.diag(H)))))
        t = 1.0
        while t > 1e-8:
            cand = theta + t * delta
            fc = f(cand)
            if np.isfinite(fc) and fc >= fx - 1e-10 * max(1.0, abs(fx)):
                break
            t *= 0.5
        else:
            break
        moved = float(np.max(np.abs(cand - theta)))
        theta, fx = cand, fc
        if moved < tol * (1.0 + float(np.max(np.abs(theta)))):
            break
    step = 1e-5 * np.maximum(1.0, np.abs(theta))
    return theta, _fd_hessian(f, theta, step)


def build_envelope(d, fam=None, psi=1.3, start=None):
    """Envelope matched to the joint mode and curvature of the hyper-posterior.

    ``start`` is an ADM :class:`FitResult` (or a vector ``(alpha, beta...)``)
    used to initialise the joint Newton search.
    """
    if d.kind is not ModelKind.BINOMIAL:
        raise EnvelopeError("the acceptance-rejection envelope is defined for the Binomial model")
    fam = fam or HyperPriorFamily()
    m = 0 if d.known_mean else d.m
    if start is None:
        from .adm import fit_adm

        start = fit_adm(d, RunConfig(t=fam.t, u=fam.u))
    if hasattr(start, "alpha_hat"):
        theta0 = np.r_[start.alpha_hat, start.beta_hat if m else []]
    else:
        theta0 = np.asarray(start, dtype=float)
    mode, H = joint_mode(d, fam, theta0)
    try:
        np.linalg.cholesky(-H)
        cov = np.linalg.inv(-H)
        cov = 0.5 * (cov + cov.T)
    except np.linalg.LinAlgError:
        raise EnvelopeError("negative Hessian at the joint mode is not positive definite; "
                            "more data or a larger trial scale may help") from None
    a, b = tail_parameters(d.k)
    sigma = math.sqrt(cov[0, 0]) * psi
    alpha_hat = float(mode[0])
    # place the skew-t mode at alpha-hat
    l = alpha_hat - sigma * (a - b) * math.sqrt(a + b) / math.sqrt((2 * a + 1) * (2 * b + 1))
    g1 = sm.SkewTParams(l, sigma, a, b)
    if m:
        xi, S = mode[1:].copy(), cov[1:, 1:] / 2.0
        try:
            sm._chol(S)
        except Exception:
            raise EnvelopeError("beta block of the envelope scale is not positive definite") from None
    else:
        xi = S = None
    return EnvelopeSpec(g1, xi, S, float(psi), mode)


@dataclass(eq=False)
class PosteriorSample:
    alpha_draws: np.ndarray
    beta_draws: np.ndarray
    p_draws: np.ndarray
    weights: np.ndarray
    acceptance_rate: float
    refill_rounds: int
    dataset: object = None
    envelope: EnvelopeSpec | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.alpha_draws.size


def _accept(log_w, rng):
    log_m = np.max(log_w)
    u = rng.random(log_w.size)
    return np.log(u) < log_w - log_m


def ar_sample(d, env, N, ar_factor=4, stream=None, fam=None, log_target=None):
    """Draw exactly ``N`` posterior samples of (alpha, beta, p).

    ``log_target(alpha, beta)`` overrides the hyper-posterior (vectorised over
    draws); by default it is :func:`binomial_log_joint_many`.
    """
    if N < 1 or ar_factor < 1:
        raise SamplerError("N and ar_factor must be positive")
    fam = fam or HyperPriorFamily()
    stream = stream if stream is not None else sm.RngStream(0, 0)
    if log_target is None:
        def log_target(alpha, beta):
            return binomial_log_joint_many(d, alpha, beta if env.m else None, fam)

    trial_stream = stream.child(0) if isinstance(stream, sm.RngStream) else stream
    accept_stream = stream.child(1) if isinstance(stream, sm.RngStream) else stream
    trial_rng, accept_rng = sm._rng(trial_stream), sm._rng(accept_stream)
    effect_rng = sm._rng(stream.child(2)) if isinstance(stream, sm.RngStream) else stream

    def draw(size):
        alpha, beta = env.sample(trial_rng, size)
        lw = np.asarray(log_target(alpha, beta), dtype=float) - env.log_density(alpha, beta)
        lw[~np.isfinite(lw)] = -np.inf
        return alpha, beta, lw

    alpha, beta, log_w = draw(ar_factor * N)
    if not np.any(np.isfinite(log_w)):
        raise SamplerError("all trial weights are zero; the envelope misses the posterior")
    keep = _accept(log_w, accept_rng)
    rounds = 0
    while keep.sum() < N:
        rounds += 1
        if rounds > MAX_REFILLS:
            raise SamplerError(f"fewer than {N} acceptances after {MAX_REFILLS} refills; "
                               "extreme weights suggest a larger trial scale")
        shortage = N - int(keep.sum())
        a2, b2, lw2 = draw(REFILL_MULTIPLIER * shortage)
        alpha, beta, log_w = np.r_[alpha, a2], np.vstack([beta, b2]), np.r_[log_w, lw2]
        keep = _accept(log_w, accept_rng)
    idx = np.flatnonzero(keep)[:N]
    acc_alpha, acc_beta = alpha[idx], beta[idx]
    r = np.exp(-acc_alpha)
    if env.m:
        from scipy.special import expit

        pe = expit(acc_beta @ d.X.T).T
    else:
        pe = np.broadcast_to(d.prior_mean[:, None], (d.k, N))
    y, n = d.y[:, None], d.se_or_n[:, None]
    a_post = y + r[None, :] * pe
    b_post = n - y + r[None, :] * (1.0 - pe)
    p = effect_rng.beta(a_post, b_post)
    # guard against draws rounding to the boundary in extreme tails
    tiny = np.finfo(float).tiny
    p = np.clip(p, tiny, 1.0 - np.finfo(float).epsneg)
    w = np.exp(log_w - np.max(log_w))
    return PosteriorSample(acc_alpha, acc_beta, p, w, float(keep.sum() / log_w.size), rounds,
                           dataset=d, envelope=env,
                           diagnostics={"trials": int(log_w.size), "accepted": int(keep.sum())})


def summarize_samples(s, confidence=0.95, config=None):
    """FitResult from a posterior sample: means, empirical quantiles, medians."""
    from .adm import FitResult

    d = s.dataset
    config = config or RunConfig(confidence=confidence, n_ar=s.n)
    lo_q, hi_q = (1.0 - confidence) / 2.0, (1.0 + confidence) / 2.0
    post_mean = s.p_draws.mean(axis=1)
    post_sd = s.p_draws.std(axis=1, ddof=1) if s.n > 1 else np.zeros(d.k)
    low = np.quantile(s.p_draws, lo_q, axis=1)
    upp = np.quantile(s.p_draws, hi_q, axis=1)
    alpha_med = float(np.median(s.alpha_draws))
    if s.beta_draws.shape[1]:
        beta_med = np.median(s.beta_draws, axis=0)
        beta_se = s.beta_draws.std(axis=0, ddof=1)
        from scipy.special import expit

        prior_mean = expit(d.X @ beta_med)
    else:
        beta_med = beta_se = None
        prior_mean = d.prior_mean.copy()
    r_med = math.exp(-alpha_med)
    shrink = r_med / (r_med + d.se_or_n)
    return FitResult(
        dataset=d, config=config, method="ar", obs_mean=d.obs_mean.copy(), prior_mean=prior_mean,
        shrinkage=shrink, low=low, post_mean=post_mean, upp=upp, post_sd=post_sd,
        alpha_hat=alpha_med, alpha_sd=float(np.std(s.alpha_draws, ddof=1)) if s.n > 1 else 0.0,
        beta_hat=beta_med, beta_se=beta_se, sample=s)
