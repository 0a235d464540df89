"""Frequency method checking by parametric bootstrap.

Random effects and data are regenerated at fixed (generative) hyper-parameters,
the model is refitted to every replicate, and the interval coverage of each
random effect is estimated by the simple indicator average and by its
Rao-Blackwellised counterpart, which replaces each indicator by the
conditional posterior probability of the interval.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
import math
import os
import warnings

import numpy as np
from scipy import special

from . import stat_math as sm
from .errors import ConfigError, CoverageError, GBPError
from .models import HyperParams, ModelKind, conditional_posterior

R_MAX = 1e12
MAX_FAILURE_RATE = 0.05


@dataclass(frozen=True)
class GenerativeSpec:
    """Hyper-parameters at which pseudo-data are generated.

    Exactly one of ``reg_coef`` (regression fits) and ``prior_mean`` (known
    prior mean fits) is set.
    """

    A_or_r: float
    reg_coef: tuple | None = None
    prior_mean: tuple | None = None
    nsim: int = 1000
    confidence: float = 0.95
    seed: int = 0

    def __post_init__(self):
        if not self.A_or_r >= 0 or not math.isfinite(self.A_or_r):
            raise ConfigError(f"A_or_r must be a non-negative finite number, got {self.A_or_r}")
        if (self.reg_coef is None) == (self.prior_mean is None):
            raise ConfigError("exactly one of reg_coef and prior_mean must be given")
        if int(self.nsim) != self.nsim or self.nsim < 1:
            raise ConfigError(f"nsim must be a positive integer, got {self.nsim}")
        if not 0 < self.confidence < 1:
            raise ConfigError("confidence must lie in (0, 1)")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    def alpha(self, kind):
        """alpha = log A (Gaussian) or -log r, with r clamped at R_MAX."""
        if kind is ModelKind.GAUSSIAN:
            return -math.inf if self.A_or_r == 0 else math.log(self.A_or_r)
        return -math.log(min(self.A_or_r, R_MAX))

    def expected_effects(self, d):
        if self.prior_mean is not None:
            return np.broadcast_to(np.asarray(self.prior_mean, dtype=float), (d.k,)).copy()
        eta = d.X @ np.asarray(self.reg_coef, dtype=float)
        if d.kind is ModelKind.BINOMIAL:
            return special.expit(eta)
        if d.kind is ModelKind.POISSON:
            return np.exp(eta)
        return eta

    def to_dict(self):
        out = asdict(self)
        for key in ("reg_coef", "prior_mean"):
            if out[key] is not None:
                out[key] = list(out[key])
        return out


def resolve_spec(fit, A_or_r=None, reg_coef=None, prior_mean=None, nsim=1000, seed=0,
                 confidence=None):
    """Fill missing generative hyper-parameters from a fit.

    A-R fits carry posterior medians in ``alpha_hat``/``beta_hat``, so the same
    rule covers both estimation methods.
    """
    d = fit.dataset
    if d.known_mean:
        if reg_coef is not None:
            raise ConfigError("reg_coef given but the fitted model has a known prior mean")
        pm = d.prior_mean if prior_mean is None else np.broadcast_to(
            np.asarray(prior_mean, dtype=float), (d.k,))
        reg, pm = None, tuple(float(v) for v in pm)
    else:
        if prior_mean is not None:
            raise ConfigError("prior_mean given but the fitted model estimates the prior mean "
                              "by regression; use reg_coef")
        reg = fit.beta_hat if reg_coef is None else np.asarray(reg_coef, dtype=float).reshape(-1)
        if len(reg) != d.m:
            raise ConfigError(f"reg_coef needs {d.m} values (intercept first), got {len(reg)}")
        reg, pm = tuple(float(v) for v in reg), None
    value = fit.A_or_r if A_or_r is None else float(A_or_r)
    conf = fit.config.confidence if confidence is None else confidence
    return GenerativeSpec(value, reg, pm, nsim, conf, seed)


@dataclass(eq=False)
class CoverageReport:
    coverage_rb: np.ndarray
    se_coverage_rb: np.ndarray
    coverage_s: np.ndarray
    se_coverage_s: np.ndarray
    overall_rb: float
    se_overall_rb: float
    spec: GenerativeSpec
    nsim_effective: int
    failures: list = field(default_factory=list)

    def to_dict(self):
        return {
            "coverageRB": self.coverage_rb.tolist(),
            "se_coverageRB": self.se_coverage_rb.tolist(),
            "coverageS": self.coverage_s.tolist(),
            "se_coverageS": self.se_coverage_s.tolist(),
            "overall_coverageRB": float(self.overall_rb),
            "se_overall_coverageRB": float(self.se_overall_rb),
            "nsim_effective": int(self.nsim_effective),
            "failures": [list(f) for f in self.failures],
            "spec": self.spec.to_dict(),
        }

    @classmethod
    def from_dict(cls, data):
        spec = dict(data["spec"])
        for key in ("reg_coef", "prior_mean"):
            if spec.get(key) is not None:
                spec[key] = tuple(spec[key])
        return cls(np.asarray(data["coverageRB"], dtype=float),
                   np.asarray(data["se_coverageRB"], dtype=float),
                   np.asarray(data["coverageS"], dtype=float),
                   np.asarray(data["se_coverageS"], dtype=float),
                   float(data["overall_coverageRB"]), float(data["se_overall_coverageRB"]),
                   GenerativeSpec(**spec), int(data["nsim_effective"]),
                   [tuple(f) for f in data.get("failures", [])])


def generate_pseudo_data(d, spec, sim_index):
    """Draw (true random effects, pseudo observations) for one replicate."""
    rng = sm.RngStream(spec.seed, sim_index).generator()
    pe = spec.expected_effects(d)
    if d.kind is ModelKind.GAUSSIAN:
        mu = sm.sample_normal(rng, pe, math.sqrt(spec.A_or_r))
        return mu, sm.sample_normal(rng, mu, d.se_or_n)
    r = min(spec.A_or_r, R_MAX)
    if not r > 0:
        raise ConfigError("r must be positive for Poisson/Binomial pseudo-data")
    if d.kind is ModelKind.POISSON:
        lam = sm.sample_gamma(rng, r * pe, r)
        return lam, sm.sample_poisson(rng, d.se_or_n * lam).astype(float)
    p = sm.sample_beta(rng, r * pe, r * (1.0 - pe))
    return p, sm.sample_binomial(rng, d.se_or_n, p).astype(float)


def coverage_indicator(true_effect, lower, upper):
    """1 if lower < true_effect < upper (open interval), else 0."""
    return ((np.asarray(lower) < true_effect) & (np.asarray(true_effect) < upper)).astype(float)


def rb_coverage_term(d_sim, spec, lower, upper, j=None):
    """P(effect in (lower, upper) | generative hyper-parameters, pseudo data)."""
    kind = d_sim.kind
    h = HyperParams(spec.alpha(kind))
    post = conditional_posterior(d_sim, h, prior_means=spec.expected_effects(d_sim))
    if j is not None:
        post = type(post)(post.family, np.atleast_1d(post.p1)[j], np.atleast_1d(post.p2)[j])
    upper = np.asarray(upper, dtype=float)
    lower = np.asarray(lower, dtype=float)
    out = np.clip(post.cdf(upper) - post.cdf(lower), 0.0, 1.0)
    return float(out) if np.ndim(out) == 0 else out


def _one_sim(d, config, spec, alpha0, i):
    from .adm import fit

    truth, y = generate_pseudo_data(d, spec, i)
    d_sim = d.with_y(y)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = fit(d_sim, config, alpha0=alpha0,
                      stream=sm.RngStream(spec.seed, i).child(1))
    except GBPError as exc:
        return i, None, None, f"{type(exc).__name__}: {exc}"
    ind = coverage_indicator(truth, res.low, res.upp)
    rb = rb_coverage_term(d_sim, spec, res.low, res.upp)
    return i, ind, rb, None


def _chunk(args):
    d, config, spec, alpha0, indices = args
    return [_one_sim(d, config, spec, alpha0, i) for i in indices]


def resolve_threads(threads=None):
    """Worker count: explicit value, else GBP_THREADS, else the CPU count."""
    if threads is not None:
        n = int(threads)
    else:
        env = os.environ.get("GBP_THREADS")
        n = int(env) if env else (os.cpu_count() or 1)
    if n < 1:
        raise ConfigError("thread count must be positive")
    return n


def run_coverage(fit, spec, threads=None):
    """Simulate ``spec.nsim`` replicates, refit each, and estimate coverage."""
    d = fit.dataset
    config = fit.config
    if config.confidence != spec.confidence:
        from dataclasses import replace

        config = replace(config, confidence=spec.confidence)
    if d.known_mean and spec.prior_mean is not None:
        d = d.with_prior_mean(spec.prior_mean)
    elif not d.known_mean and spec.reg_coef is None:
        raise ConfigError("regression fit needs reg_coef in the generative spec")
    alpha0 = fit.adm.alpha_hat if fit.adm is not None else fit.alpha_hat
    nsim = int(spec.nsim)
    workers = min(resolve_threads(threads), nsim)
    if workers == 1:
        results = _chunk((d, config, spec, alpha0, range(nsim)))
    else:
        blocks = np.array_split(np.arange(nsim), workers * 4)
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = ex.map(_chunk, [(d, config, spec, alpha0, list(b)) for b in blocks if b.size])
            results = [r for part in parts for r in part]
    results.sort(key=lambda t: t[0])
    failures = [(i, msg) for i, _, _, msg in results if msg is not None]
    ok = [(ind, rb) for _, ind, rb, msg in results if msg is None]
    if len(failures) > MAX_FAILURE_RATE * nsim:
        raise CoverageError(f"{len(failures)} of {nsim} refits failed (limit 5%); "
                            f"first failure: sim {failures[0][0]}: {failures[0][1]}")
    if not ok:
        raise CoverageError("no successful refits")
    ind = np.array([o[0] for o in ok])
    rb = np.array([o[1] for o in ok])
    n_eff = len(ok)

    def se(a):
        return np.sqrt(a.var(axis=0, ddof=1) / n_eff) if n_eff > 1 else np.zeros(a.shape[1])

    cov_rb, se_rb = rb.mean(axis=0), se(rb)
    return CoverageReport(cov_rb, se_rb, ind.mean(axis=0), se(ind),
                          float(np.mean(cov_rb)), float(math.sqrt(np.sum(se_rb**2)) / d.k),
                          spec, n_eff, failures)
