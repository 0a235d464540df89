"""Data model, validation/propriety rules and closed-form conditional posteriors."""

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy import special

from .errors import ConfigError, ProprietyError, ValidationError
from . import stat_math as sm


class ModelKind(str, Enum):
    GAUSSIAN = "gaussian"
    POISSON = "poisson"
    BINOMIAL = "binomial"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigError(f"unknown model {value!r}; choose gaussian, poisson or binomial") from None


@dataclass(frozen=True, eq=False)
class Dataset:
    """Group-level aggregate data for one of the three models.

    ``se_or_n`` holds standard errors (Gaussian), exposures (Poisson) or
    trial counts (Binomial).  ``X`` is the full design matrix including any
    intercept column; it is ``None`` when the prior mean is known.
    """

    kind: ModelKind
    y: np.ndarray
    se_or_n: np.ndarray
    X: np.ndarray | None = None
    prior_mean: np.ndarray | None = None
    labels: tuple = ()
    covariate_names: tuple = ()

    @classmethod
    def build(cls, kind, y, se_or_n, covariates=None, prior_mean=None, intercept=True,
              labels=None, covariate_names=None):
        kind = ModelKind.parse(kind)
        y = np.asarray(y, dtype=float).reshape(-1)
        se_or_n = np.asarray(se_or_n, dtype=float).reshape(-1)
        k = y.size
        if covariates is not None:
            covariates = np.asarray(covariates, dtype=float)
            if covariates.ndim == 1:
                covariates = covariates.reshape(-1, 1)
            if covariates.shape[1] == 0:
                covariates = None
        if prior_mean is not None:
            if covariates is not None:
                raise ConfigError("give either covariates or a known prior mean, not both")
            pm = np.broadcast_to(np.asarray(prior_mean, dtype=float), (k,)).copy()
            X, names = None, ()
        else:
            pm = None
            cols, names = [], []
            if intercept:
                cols.append(np.ones((k, 1)))
                names.append("(Intercept)")
            if covariates is not None:
                if covariates.shape[0] != k:
                    raise ValidationError("lengths", "covariate rows do not match the number of groups")
                cols.append(covariates)
                given = list(covariate_names or [f"x{i + 1}" for i in range(covariates.shape[1])])
                names.extend(given)
            if not cols:
                raise ConfigError("without an intercept or covariates the prior mean must be known")
            X = np.hstack(cols)
        if labels is None:
            labels = tuple(str(i + 1) for i in range(k))
        return cls(kind, y, se_or_n, X, pm, tuple(str(s) for s in labels), tuple(names))

    @property
    def k(self):
        return self.y.size

    @property
    def m(self):
        return 0 if self.X is None else self.X.shape[1]

    @property
    def known_mean(self):
        return self.prior_mean is not None

    @property
    def V(self):
        if self.kind is not ModelKind.GAUSSIAN:
            raise AttributeError("variances are defined for the Gaussian model only")
        return self.se_or_n**2

    @property
    def n(self):
        if self.kind is ModelKind.GAUSSIAN:
            raise AttributeError("the Gaussian model carries standard errors, not n")
        return self.se_or_n

    @property
    def obs_mean(self):
        if self.kind is ModelKind.GAUSSIAN:
            return self.y
        return self.y / self.se_or_n

    def with_y(self, y):
        return replace(self, y=np.asarray(y, dtype=float).reshape(-1))

    def with_prior_mean(self, prior_mean):
        pm = np.broadcast_to(np.asarray(prior_mean, dtype=float), (self.k,)).copy()
        return replace(self, prior_mean=pm, X=None, covariate_names=())

    def expected_effect(self, beta=None):
        """Prior mean of each random effect, known or induced by ``beta``."""
        if self.known_mean:
            return self.prior_mean
        eta = self.X @ np.asarray(beta, dtype=float)
        if self.kind is ModelKind.BINOMIAL:
            return special.expit(eta)
        if self.kind is ModelKind.POISSON:
            return np.exp(eta)
        return eta


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

PROPRIETY_RULES = frozenset({
    "gaussian_k_ge_m_plus_3", "poisson_prior_mean_known", "poisson_two_nonzero",
    "binomial_two_interior", "binomial_interior_rank",
})


@dataclass
class ValidationReport:
    failures: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.failures

    @property
    def rules(self):
        return [rule for rule, _ in self.failures]

    def fail(self, rule, message):
        self.failures.append((rule, message))

    def raise_for_failure(self):
        if self.ok:
            return
        rule, message = self.failures[0]
        exc = ProprietyError if rule in PROPRIETY_RULES else ValidationError
        raise exc(rule, message)


def _is_count(v):
    return bool(np.all(v >= 0) and np.all(v == np.round(v)))


def _rank(M, rtol=1e-10):
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > rtol * s.max())) if s.max() > 0 else 0


def validate_dataset(d):
    """Check domain constraints and the posterior propriety conditions."""
    rep = ValidationReport()
    k = d.k
    if k < 1:
        rep.fail("k>=1", "k ≥ 1 violated: the dataset has no groups")
        return rep
    if d.se_or_n.size != k:
        rep.fail("lengths", f"y has {k} entries but se/n has {d.se_or_n.size}")
        return rep
    if d.X is not None and d.X.shape[0] != k:
        rep.fail("lengths", "design matrix rows do not match the number of groups")
        return rep
    if d.prior_mean is not None and d.prior_mean.size != k:
        rep.fail("lengths", "prior mean length does not match the number of groups")
        return rep
    arrays = [d.y, d.se_or_n] + ([d.X] if d.X is not None else []) + (
        [d.prior_mean] if d.prior_mean is not None else [])
    if not all(np.all(np.isfinite(a)) for a in arrays):
        rep.fail("finite", "inputs contain NaN or infinite values")
        return rep

    m = d.m
    if d.kind is ModelKind.GAUSSIAN:
        if np.any(d.se_or_n <= 0):
            rep.fail("gaussian_se_positive", "standard errors must be positive")
        if k < m + 3:
            rep.fail("gaussian_k_ge_m_plus_3",
                     f"Gaussian posterior is proper only if k ≥ m+3 (k={k}, m={m})")
        return rep

    if d.kind is ModelKind.POISSON:
        if not _is_count(d.y):
            rep.fail("poisson_counts", "Poisson outcomes must be non-negative integers")
        if np.any(d.se_or_n <= 0):
            rep.fail("poisson_exposure_positive", "exposures must be positive")
        if not d.known_mean:
            rep.fail("poisson_prior_mean_known",
                     "the Poisson model requires known expected random effects (prior mean)")
        elif np.any(d.prior_mean <= 0):
            rep.fail("poisson_prior_mean_positive", "Poisson prior means must be positive")
        if np.sum(d.y > 0) < 2:
            rep.fail("poisson_two_nonzero",
                     "at least two groups with non-zero counts are needed for propriety")
        return rep

    # binomial
    n = d.se_or_n
    if not _is_count(d.y):
        rep.fail("binomial_counts", "Binomial successes must be non-negative integers")
    if not (_is_count(n) and np.all(n > 0)):
        rep.fail("binomial_trials", "Binomial trials must be positive integers")
    if np.any(d.y > n):
        rep.fail("binomial_y_le_n", "successes exceed trials in some group")
    if d.known_mean and np.any((d.prior_mean <= 0) | (d.prior_mean >= 1)):
        rep.fail("binomial_prior_mean_range", "Binomial prior means must lie in (0, 1)")
    interior = (d.y > 0) & (d.y < n)
    k_y = int(np.sum(interior))
    if k_y < 2:
        rep.fail("binomial_two_interior",
                 f"at least two interior groups (0 < y < n) are needed; found {k_y}")
    elif m > 0 and _rank(d.X[interior]) < m:
        rep.fail("binomial_interior_rank",
                 f"covariates of the {k_y} interior groups do not have full column rank {m}")
    return rep


# ---------------------------------------------------------------------------
# Shrinkage and conditional posteriors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HyperParams:
    """``alpha`` is log A (Gaussian) or -log r (Poisson/Binomial)."""

    alpha: float
    beta: np.ndarray | None = None

    @property
    def A(self):
        return float(np.exp(self.alpha))

    @property
    def r(self):
        return float(np.exp(-self.alpha))


def shrinkage(alpha, n_or_V, kind):
    """Shrinkage factor: r/(r+n) for Poisson/Binomial, V/(V+A) for Gaussian."""
    kind = ModelKind.parse(kind)
    v = np.log(np.asarray(n_or_V, dtype=float))
    if kind is ModelKind.GAUSSIAN:
        out = special.expit(v - alpha)
    else:
        out = special.expit(-alpha - v)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True, eq=False)
class ConditionalPosterior:
    """Per-group conditional posterior given the hyper-parameters.

    ``p1, p2`` are (mean, variance) for Normal, (shape, rate) for Gamma and
    the two shape parameters for Beta.
    """

    family: str
    p1: np.ndarray
    p2: np.ndarray

    def mean(self):
        if self.family == "normal":
            return self.p1
        if self.family == "gamma":
            return self.p1 / self.p2
        return self.p1 / (self.p1 + self.p2)

    def var(self):
        if self.family == "normal":
            return self.p2
        if self.family == "gamma":
            return self.p1 / self.p2**2
        s = self.p1 + self.p2
        return self.p1 * self.p2 / (s * s * (s + 1))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.family == "normal":
            sd = np.sqrt(self.p2)
            with np.errstate(divide="ignore", invalid="ignore"):
                z = (x - self.p1) / sd
            # zero variance: a point mass at the mean
            return np.where(sd > 0, special.ndtr(z), (x >= self.p1).astype(float))
        if self.family == "gamma":
            return special.gammainc(self.p1, self.p2 * np.clip(x, 0.0, None))
        return special.betainc(self.p1, self.p2, np.clip(x, 0.0, 1.0))


def conditional_posterior(d, h, prior_means=None):
    """Closed-form conditional posterior of every random effect."""
    pm = d.expected_effect(h.beta) if prior_means is None else np.asarray(prior_means, dtype=float)
    if d.kind is ModelKind.GAUSSIAN:
        V = d.V
        B = shrinkage(h.alpha, V, d.kind)
        return ConditionalPosterior("normal", (1 - B) * d.y + B * pm, (1 - B) * V)
    r = h.r
    n = d.se_or_n
    if d.kind is ModelKind.POISSON:
        return ConditionalPosterior("gamma", r * pm + d.y, r + n)
    return ConditionalPosterior("beta", d.y + r * pm, n - d.y + r * (1 - pm))
