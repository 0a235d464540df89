"""Adjustment for density maximization (ADM) fitting pipeline.

Steps: maximise the alpha posterior and take its curvature (the invariant
information), approximate each shrinkage posterior by a Beta, estimate the
moments of the expected random effects, then match the random-effect
posteriors to skew-normal (Gaussian), Gamma (Poisson) or Beta (Binomial)
distributions.
"""

from dataclasses import dataclass, field
import math
import warnings

import numpy as np
from scipy import optimize, special, stats

from . import stat_math as sm
from .config import RunConfig
from .errors import ConfigError, FitError
from .likelihood import HyperPosterior, HyperPriorFamily, gaussian_gls
from .models import ModelKind, shrinkage, validate_dataset

ALPHA_LIMIT = 60.0
_GOLDEN = 1.618033988749895


# ---------------------------------------------------------------------------
# alpha: mode and invariant information
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AlphaFit:
    alpha_hat: float
    invariant_info: float
    n_evals: int = 0

    @property
    def alpha_sd(self):
        return self.invariant_info ** -0.5


def default_alpha_start(d):
    if d.kind is ModelKind.GAUSSIAN:
        V = d.V
        excess = np.var(d.y, ddof=1) - V.mean() if d.k > 1 else 0.0
        return float(np.log(max(excess, 0.0) + 0.01 * V.mean()))
    return 0.0


def _finite(v):
    return v if np.isfinite(v) else -np.inf


def _bracket_max(f, x0, lo=-ALPHA_LIMIT, hi=ALPHA_LIMIT):
    """Expand from x0 until the maximand decreases on both sides."""
    step = 1.0
    xm, fm = x0, _finite(f(x0))
    xl, fl = x0 - step, _finite(f(x0 - step))
    xr, fr = x0 + step, _finite(f(x0 + step))
    go_right = fr >= fl
    while (fr >= fm) if go_right else (fl >= fm):
        step *= _GOLDEN
        if go_right:
            xl, fl, xm, fm = xm, fm, xr, fr
            xr = xm + step
            if xr > hi:
                raise FitError(f"no interior maximum of the alpha posterior below alpha={hi}; "
                               "check posterior propriety and the data")
            fr = _finite(f(xr))
        else:
            xr, fr, xm, fm = xm, fm, xl, fl
            xl = xm - step
            if xl < lo:
                raise FitError(f"no interior maximum of the alpha posterior above alpha={lo}; "
                               "check posterior propriety and the data")
            fl = _finite(f(xl))
    if not np.isfinite(fm):
        raise FitError("alpha posterior is not finite anywhere on the search path")
    return xl, xm, xr


def fit_alpha(d, fam=None, alpha0=None, post=None):
    """Posterior mode of alpha and the invariant information at the mode."""
    post = post or HyperPosterior(d, fam)
    count = [0]

    def f(a):
        count[0] += 1
        return post(a)

    x0 = default_alpha_start(d) if alpha0 is None else float(alpha0)
    a, b, c = _bracket_max(f, x0)
    res = optimize.minimize_scalar(lambda x: -f(x), bracket=(a, b, c), method="brent",
                                   options={"xtol": 1e-8})
    ah = float(res.x)
    if not (-ALPHA_LIMIT < ah < ALPHA_LIMIT):
        raise FitError(f"alpha mode {ah} outside [-{ALPHA_LIMIT}, {ALPHA_LIMIT}]")
    h = 1e-4 * max(1.0, abs(ah))
    f0 = f(ah)

    def second(step):
        return (f(ah + step) - 2.0 * f0 + f(ah - step)) / step**2

    info = -(4.0 * second(h) - second(2 * h)) / 3.0
    if not info > 0:
        raise FitError(f"non-positive invariant information {info} at alpha={ah}")
    return AlphaFit(ah, float(info), count[0])


# ---------------------------------------------------------------------------
# Shrinkage factors
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ShrinkageApprox:
    """Beta(a1, a0) approximation to the posterior of each shrinkage factor."""

    B_point: np.ndarray
    a1: np.ndarray
    a0: np.ndarray

    def moment(self, c):
        """E(B^c | y) = B(a1 + c, a0) / B(a1, a0)."""
        return np.exp(special.betaln(self.a1 + c, self.a0) - special.betaln(self.a1, self.a0))

    @property
    def mean(self):
        return self.a1 / (self.a1 + self.a0)

    @property
    def var(self):
        s = self.a1 + self.a0
        return self.a1 * self.a0 / (s * s * (s + 1.0))


def shrinkage_approx(fit, d):
    B = shrinkage(fit.alpha_hat, d.V if d.kind is ModelKind.GAUSSIAN else d.n, d.kind)
    B = np.atleast_1d(np.asarray(B, dtype=float))
    info = fit.invariant_info
    return ShrinkageApprox(B, info / (1.0 - B), info / B)


def variance_of_shrinkage(fit, B_point):
    B = np.asarray(B_point, dtype=float)
    bb = B * (1.0 - B)
    return bb * bb / (fit.invariant_info + bb)


# ---------------------------------------------------------------------------
# Expected random effects
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ExpectedEffectMoments:
    """Posterior mean and variance of each expected random effect.

    For the Binomial model ``b1, b0`` are the matched Beta parameters (None in
    the degenerate zero-variance case).  ``beta_hat``/``Sigma_hat`` describe
    beta given alpha-hat when the prior mean is estimated.
    """

    mean: np.ndarray
    var: np.ndarray
    b1: np.ndarray | None = None
    b0: np.ndarray | None = None
    beta_hat: np.ndarray | None = None
    Sigma_hat: np.ndarray | None = None

    @property
    def second_moment(self):
        return self.var + self.mean**2


def expected_effect_moments_binomial(d, alpha_hat, profile=None):
    if d.known_mean:
        p = d.prior_mean
        return ExpectedEffectMoments(p.copy(), np.zeros(d.k))
    if profile is None:
        profile = HyperPosterior(d).profile(alpha_hat)
    beta, Sigma = profile.beta_hat, profile.Sigma_hat
    X = d.X
    lin = X @ beta
    xs = np.einsum("ij,jk,ik->i", X, Sigma, X)
    degenerate = xs <= 0.0
    mean = special.expit(lin)
    var = np.zeros(d.k)
    b1 = np.full(d.k, np.nan)
    b0 = np.full(d.k, np.nan)
    ok = ~degenerate
    if np.any(ok):
        eta = np.exp(lin[ok] + xs[ok] / 2.0)
        b0_ok = (1.0 + eta) / (eta * np.expm1(xs[ok])) + 2.0
        b1_ok = eta * (b0_ok - 1.0)
        s = b1_ok + b0_ok
        mean[ok] = b1_ok / s
        var[ok] = b1_ok * b0_ok / (s * s * (s + 1.0))
        b1[ok], b0[ok] = b1_ok, b0_ok
    return ExpectedEffectMoments(mean, var, b1, b0, beta, Sigma)


def expected_effect_moments_gaussian(d, alpha_hat):
    if d.known_mean:
        return ExpectedEffectMoments(d.prior_mean.copy(), np.zeros(d.k))
    beta, Sigma = gaussian_gls(d, math.exp(alpha_hat))
    X = d.X
    return ExpectedEffectMoments(X @ beta, np.einsum("ij,jk,ik->i", X, Sigma, X),
                                 beta_hat=beta, Sigma_hat=Sigma)


# ---------------------------------------------------------------------------
# Random-effect posteriors
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class RandomEffectPosterior:
    """Matched approximating family for every group, with mean/sd/interval.

    ``params`` maps parameter names to per-group arrays: ``shape, rate`` for
    gamma, ``a, b`` for beta, ``phi, omega, delta`` for skew-normal and
    ``mean, var`` for normal.
    """

    family: str
    params: dict
    mean: np.ndarray
    sd: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    confidence: float
    warnings: list = field(default_factory=list)

    def cdf(self, j, x):
        p = {name: float(v[j]) for name, v in self.params.items()}
        if self.family == "gamma":
            return sm.gamma_cdf(max(x, 0.0), p["shape"], p["rate"])
        if self.family == "beta":
            return sm.beta_cdf(min(max(x, 0.0), 1.0), p["a"], p["b"])
        if self.family == "skew-normal":
            return sm.skew_normal_cdf(x, sm.SkewNormalParams(p["phi"], p["omega"], p["delta"]))
        return sm.normal_cdf((x - p["mean"]) / math.sqrt(p["var"]))


def _tails(confidence):
    return (1.0 - confidence) / 2.0, (1.0 + confidence) / 2.0


def match_random_effect_poisson(d, shr, confidence=0.95):
    ybar, lam, n = d.obs_mean, d.prior_mean, d.n
    E1, E2 = shr.moment(1), shr.moment(2)
    var_b = shr.var
    mu = (1.0 - E1) * ybar + E1 * lam
    # E(1-B)^2 = 1 - 2E(B) + E(B^2);  E((1-B)B) = E(B) - E(B^2)
    sig2 = (ybar * (1.0 - 2.0 * E1 + E2) + lam * (E1 - E2)) / n + (ybar - lam) ** 2 * var_b
    if np.any(sig2 <= 0):
        raise FitError("non-positive posterior variance in the Poisson moment match")
    shape, rate = mu**2 / sig2, mu / sig2
    lo, hi = _tails(confidence)
    return RandomEffectPosterior(
        "gamma", {"shape": shape, "rate": rate}, mu, np.sqrt(sig2),
        sm.gamma_quantile(np.full(d.k, lo), shape, rate),
        sm.gamma_quantile(np.full(d.k, hi), shape, rate), confidence)


def match_random_effect_binomial(d, shr, eff, confidence=0.95):
    ybar, n = d.obs_mean, d.n
    E1, E2, E3 = shr.moment(1), shr.moment(2), shr.moment(3)
    Ep, Ep2 = eff.mean, eff.second_moment
    mu = (1.0 - E1) * ybar + E1 * Ep
    # E(p*(1-p*)(1-B))/n with p* = ybar - B (ybar - pE), expanded in moments of B
    E_dev2 = ybar**2 - 2.0 * ybar * Ep + Ep2          # E((ybar - pE)^2)
    var_b_dev = E2 * E_dev2 - E1**2 * (ybar - Ep) ** 2  # VAR(B (ybar - pE)), B and pE independent
    sig2 = ((1.0 - ybar) * ybar * (1.0 - E1)
            + (2.0 * ybar - 1.0) * (E1 - E2) * (ybar - Ep)
            - (E2 - E3) * E_dev2) / n + var_b_dev
    notes = []
    if np.any(sig2 <= 0):
        raise FitError("non-positive posterior variance in the Binomial moment match")
    cap = mu * (1.0 - mu)
    over = sig2 >= cap
    if np.any(over):
        sig2 = np.where(over, 0.999 * cap, sig2)
        msg = f"posterior variance clamped below mu(1-mu) for groups {[int(j) + 1 for j in np.flatnonzero(over)]}"
        notes.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    t = cap / sig2 - 1.0
    a, b = t * mu, t * (1.0 - mu)
    lo, hi = _tails(confidence)
    return RandomEffectPosterior(
        "beta", {"a": a, "b": b}, mu, np.sqrt(sig2),
        sm.beta_quantile(np.full(d.k, lo), a, b), sm.beta_quantile(np.full(d.k, hi), a, b),
        confidence, notes)


SKEW_MAX = (4.0 - math.pi) / (2.0 * (math.pi / 2.0 - 1.0) ** 1.5)  # |skewness| as delta -> 1
DELTA_CLAMP = 0.995


def skew_normal_delta(gamma):
    """Invert the skew-normal skewness formula for delta (|gamma| < SKEW_MAX)."""
    g23 = abs(gamma) ** (2.0 / 3.0)
    return math.copysign(math.sqrt(math.pi / 2.0 * g23 / (g23 + ((4.0 - math.pi) / 2.0) ** (2.0 / 3.0))),
                         gamma)


def gaussian_cumulants(d, shr, eff):
    """First three cumulants of each mu_j | y.

    Given B, mu_j is Normal with mean (1-B) y + B m and variance
    (1-B) V + E(B)^2 s, where m, s are the expected-effect mean and
    variance at A-hat.  Cumulants follow from the law of total cumulants over
    B ~ Beta(a1, a0).
    """
    y, V = d.y, d.V
    m, s = eff.mean, eff.var
    E1, E2, E3 = shr.moment(1), shr.moment(2), shr.moment(3)
    var_b = E2 - E1**2
    k3_b = E3 - 3.0 * E1 * E2 + 2.0 * E1**3
    dev = y - m
    c1 = y - E1 * dev
    c2 = (1.0 - E1) * V + E1**2 * s + dev**2 * var_b
    # Cov(mu*, (1-B)V) = dev V VAR(B);  third cumulant of mu* = -dev^3 k3(B)
    c3 = 3.0 * dev * V * var_b - dev**3 * k3_b
    return c1, c2, c3


def match_random_effect_gaussian(d, shr, eff, confidence=0.95, normal_ci=False):
    c1, c2, c3 = gaussian_cumulants(d, shr, eff)
    lo_q, hi_q = _tails(confidence)
    sd = np.sqrt(c2)
    if normal_ci:
        z = sm.normal_quantile(hi_q)
        return RandomEffectPosterior("normal", {"mean": c1, "var": c2}, c1, sd,
                                     c1 - z * sd, c1 + z * sd, confidence)
    notes = []
    k = d.k
    phi, omega, delta = np.empty(k), np.empty(k), np.empty(k)
    lower, upper = np.empty(k), np.empty(k)
    for j in range(k):
        g = c3[j] / c2[j] ** 1.5
        if abs(g) >= SKEW_MAX:
            dj = math.copysign(DELTA_CLAMP, g)
            msg = f"group {j + 1}: skewness {g:.4f} beyond the skew-normal range; delta clamped"
            notes.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
        else:
            dj = skew_normal_delta(g)
        om = math.sqrt(c2[j] / (1.0 - 2.0 * dj * dj / math.pi))
        ph = c1[j] - om * dj * sm.SQRT_2_OVER_PI
        p = sm.SkewNormalParams(ph, om, dj)
        phi[j], omega[j], delta[j] = ph, om, dj
        lower[j] = sm.skew_normal_quantile(lo_q, p)
        upper[j] = sm.skew_normal_quantile(hi_q, p)
    return RandomEffectPosterior("skew-normal", {"phi": phi, "omega": omega, "delta": delta},
                                 c1, sd, lower, upper, confidence, notes)


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class FitResult:
    """Per-group estimates (input order) plus hyper-parameter summaries."""

    dataset: object
    config: RunConfig
    method: str
    obs_mean: np.ndarray
    prior_mean: np.ndarray
    shrinkage: np.ndarray
    low: np.ndarray
    post_mean: np.ndarray
    upp: np.ndarray
    post_sd: np.ndarray
    alpha_hat: float
    alpha_sd: float
    beta_hat: np.ndarray | None = None
    beta_se: np.ndarray | None = None
    posterior: RandomEffectPosterior | None = None
    alpha_fit: AlphaFit | None = None
    shrinkage_fit: ShrinkageApprox | None = None
    effect_moments: ExpectedEffectMoments | None = None
    sample: object = None
    adm: "FitResult | None" = None
    warnings: list = field(default_factory=list)

    @property
    def kind(self):
        return self.dataset.kind

    @property
    def A_or_r(self):
        """A-hat = e^alpha (Gaussian) or r-hat = e^-alpha (Poisson/Binomial)."""
        if self.kind is ModelKind.GAUSSIAN:
            return math.exp(self.alpha_hat)
        return math.exp(-self.alpha_hat)

    def regression_table(self):
        if self.beta_hat is None:
            return []
        rows = []
        names = self.dataset.covariate_names
        for i, (est, se) in enumerate(zip(self.beta_hat, self.beta_se)):
            z = est / se
            rows.append({"name": f"beta{i + 1}", "term": names[i] if i < len(names) else f"beta{i + 1}",
                         "estimate": float(est), "se": float(se), "z_val": float(z),
                         "p_val": float(2.0 * stats.norm.sf(abs(z)))})
        return rows

    def display_order(self, sort=None):
        """Row order for tables: ascending n, or descending se for Gaussian."""
        sort = self.config.sort if sort is None else sort
        k = self.dataset.k
        if not sort:
            return np.arange(k)
        key = self.dataset.se_or_n
        if self.kind is ModelKind.GAUSSIAN:
            return np.argsort(-key, kind="stable")
        return np.argsort(key, kind="stable")

    def mean_row(self):
        return {
            "se_or_n": float(np.mean(self.dataset.se_or_n)),
            "prior_mean": float(np.mean(self.prior_mean)),
            "shrinkage": float(np.mean(self.shrinkage)),
            "low_intv": float(np.mean(self.low)),
            "post_mean": float(np.mean(self.post_mean)),
            "upp_intv": float(np.mean(self.upp)),
            "post_sd": float(np.mean(self.post_sd)),
        }


def fit_adm(d, config=None, alpha0=None):
    """ADM fit of a validated dataset."""
    config = config or RunConfig()
    fam = HyperPriorFamily(config.t, config.u)
    post = HyperPosterior(d, fam)
    afit = fit_alpha(d, fam, alpha0=alpha0, post=post)
    shr = shrinkage_approx(afit, d)
    if d.kind is ModelKind.POISSON:
        eff = ExpectedEffectMoments(d.prior_mean.copy(), np.zeros(d.k))
        rep = match_random_effect_poisson(d, shr, config.confidence)
    elif d.kind is ModelKind.BINOMIAL:
        profile = None if d.known_mean else post.profile(afit.alpha_hat)
        eff = expected_effect_moments_binomial(d, afit.alpha_hat, profile)
        rep = match_random_effect_binomial(d, shr, eff, config.confidence)
    else:
        eff = expected_effect_moments_gaussian(d, afit.alpha_hat)
        rep = match_random_effect_gaussian(d, shr, eff, config.confidence, config.normal_ci)
    beta_se = None if eff.Sigma_hat is None else np.sqrt(np.diag(eff.Sigma_hat))
    return FitResult(
        dataset=d, config=config, method="adm", obs_mean=d.obs_mean.copy(),
        prior_mean=eff.mean, shrinkage=shr.B_point, low=rep.lower, post_mean=rep.mean,
        upp=rep.upper, post_sd=rep.sd, alpha_hat=afit.alpha_hat, alpha_sd=afit.alpha_sd,
        beta_hat=eff.beta_hat, beta_se=beta_se, posterior=rep, alpha_fit=afit,
        shrinkage_fit=shr, effect_moments=eff, warnings=list(rep.warnings))


def fit(d, config=None, alpha0=None, stream=None):
    """Validate, fit by ADM, and optionally sample by acceptance-rejection.

    ``alpha0`` overrides the start of the alpha bracket search.  When
    ``config.n_ar > 0`` (Binomial only) the returned result summarises the
    acceptance-rejection sample and keeps the ADM fit in ``.adm``.
    """
    config = config or RunConfig()
    if config.model is not None and ModelKind.parse(config.model) is not d.kind:
        raise ConfigError(f"config model {config.model!r} does not match dataset kind {d.kind.value!r}")
    validate_dataset(d).raise_for_failure()
    res = fit_adm(d, config, alpha0)
    if config.n_ar > 0:
        if d.kind is not ModelKind.BINOMIAL:
            raise ConfigError("acceptance-rejection sampling is available for the Binomial model only")
        from .ar_sampler import ar_sample, build_envelope, summarize_samples

        fam = HyperPriorFamily(config.t, config.u)
        env = build_envelope(d, fam, psi=config.trial_scale, start=res)
        if stream is None:
            stream = sm.RngStream(config.seed, 0)
        sample = ar_sample(d, env, config.n_ar, config.ar_factor, stream, fam=fam)
        out = summarize_samples(sample, config.confidence, config)
        out.adm = res
        return out
    return res
