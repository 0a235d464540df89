"""Special functions, distribution primitives and seedable random streams.

The closed-form special functions are thin, domain-checked wrappers over
:mod:`scipy.special`; the skew-normal CDF is computed by adaptive quadrature
of its density and inverted by bracketed root finding.  Every sampler takes a
``numpy.random.Generator`` (or an :class:`RngStream`, which is turned into a
fresh generator, i.e. replayed from its start).
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy import integrate, optimize, special

from .errors import DomainError, MatrixError

__all__ = [
    "RngStream", "SkewNormalParams", "SkewTParams",
    "log_gamma", "log_beta", "log_rising", "digamma_rising", "trigamma_rising",
    "beta_cdf", "beta_quantile",
    "gamma_cdf", "gamma_quantile", "normal_cdf", "normal_quantile",
    "skew_normal_pdf", "skew_normal_cdf", "skew_normal_quantile",
    "skew_normal_moments",
    "sample_gamma", "sample_beta", "sample_normal", "sample_poisson",
    "sample_binomial", "sample_skew_t", "skew_t_from_beta", "skew_t_mode",
    "skew_t_log_density", "mvt4_log_density", "sample_mvt4",
]

_U64 = 2**64
SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RngStream:
    """A replayable random stream keyed by ``(master_seed, stream_index)``.

    The stream is realised by the counter-based Philox generator with the two
    64-bit words as its key, so distinct pairs give independent sequences and
    the same pair always reproduces the same sequence.
    """

    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        for name in ("master_seed", "stream_index"):
            v = getattr(self, name)
            if not (0 <= int(v) < _U64):
                raise DomainError(f"{name} must be a 64-bit unsigned integer, got {v}")

    def generator(self):
        key = np.array([self.master_seed, self.stream_index], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, index):
        """Independent sub-stream, e.g. for a nested task inside one simulation."""
        ss = np.random.SeedSequence([self.master_seed, self.stream_index, int(index)])
        return RngStream(self.master_seed, int(ss.generate_state(1, np.uint64)[0]))


def _rng(stream):
    if isinstance(stream, RngStream):
        return stream.generator()
    if isinstance(stream, np.random.Generator):
        return stream
    raise TypeError(f"expected RngStream or numpy Generator, got {type(stream).__name__}")


# ---------------------------------------------------------------------------
# Special functions
# ---------------------------------------------------------------------------

def _positive(name, *values):
    for v in values:
        if not np.all(np.asarray(v) > 0):
            raise DomainError(f"{name} requires positive arguments, got {v}")


def log_gamma(x):
    """Natural log of the gamma function for ``x > 0``."""
    _positive("log_gamma", x)
    out = special.gammaln(x)
    return float(out) if np.ndim(out) == 0 else out


def log_beta(a, b):
    """Natural log of the beta function B(a, b)."""
    _positive("log_beta", a, b)
    out = special.betaln(a, b)
    return float(out) if np.ndim(out) == 0 else out


def _scalar(out):
    return float(out) if np.ndim(out) == 0 else out


# Differences of lgamma/digamma/trigamma at x + c and x.  For large x the
# direct difference cancels, so an asymptotic series is used beyond _ASYM_X.
_ASYM_X = 50.0


def _stirling_tail(z):
    z2 = z * z
    return (1.0 / 12.0 - (1.0 / 360.0 - (1.0 / 1260.0 - 1.0 / (1680.0 * z2)) / z2) / z2) / z


def log_rising(x, c):
    """log Γ(x + c) - log Γ(x) for x > 0, c >= 0, accurate for huge x."""
    x = np.asarray(x, dtype=float)
    c = np.asarray(c, dtype=float)
    x, c = np.broadcast_arrays(x, c)
    out = np.empty(x.shape)
    big = x >= _ASYM_X
    small = ~big
    out[small] = special.gammaln(x[small] + c[small]) - special.gammaln(x[small])
    xb, cb = x[big], c[big]
    out[big] = ((xb - 0.5) * np.log1p(cb / xb) + cb * np.log(xb + cb) - cb
                + _stirling_tail(xb + cb) - _stirling_tail(xb))
    return _scalar(out)


def _digamma_tail(z):
    # digamma(z) - log(z) + 1/(2z)
    w = 1.0 / (z * z)
    return -w * (1.0 / 12.0 - w * (1.0 / 120.0 - w * (1.0 / 252.0 - w / 240.0)))


def digamma_rising(x, c):
    """ψ(x + c) - ψ(x)."""
    x = np.asarray(x, dtype=float)
    c = np.asarray(c, dtype=float)
    x, c = np.broadcast_arrays(x, c)
    out = np.empty(x.shape)
    big = x >= _ASYM_X
    small = ~big
    out[small] = special.digamma(x[small] + c[small]) - special.digamma(x[small])
    xb, cb = x[big], c[big]
    zb = xb + cb
    out[big] = (np.log1p(cb / xb) + 0.5 * cb / (xb * zb)
                + _digamma_tail(zb) - _digamma_tail(xb))
    return _scalar(out)


def _trigamma_tail(z):
    # trigamma(z) - 1/z - 1/(2 z^2)
    w = 1.0 / (z * z)
    return w / z * (1.0 / 6.0 - w * (1.0 / 30.0 - w * (1.0 / 42.0 - w / 30.0)))


def trigamma_rising(x, c):
    """ψ'(x + c) - ψ'(x)."""
    x = np.asarray(x, dtype=float)
    c = np.asarray(c, dtype=float)
    x, c = np.broadcast_arrays(x, c)
    out = np.empty(x.shape)
    big = x >= _ASYM_X
    small = ~big
    out[small] = special.polygamma(1, x[small] + c[small]) - special.polygamma(1, x[small])
    xb, cb = x[big], c[big]
    zb = xb + cb
    out[big] = (-cb / (xb * zb) - 0.5 * cb * (xb + zb) / (xb * zb) ** 2
                + _trigamma_tail(zb) - _trigamma_tail(xb))
    return _scalar(out)


def _probability(name, p, open_interval=False):
    p = np.asarray(p, dtype=float)
    bad = (p <= 0) | (p >= 1) if open_interval else (p < 0) | (p > 1)
    if np.any(bad) or np.any(np.isnan(p)):
        raise DomainError(f"{name}: probability outside {'(0, 1)' if open_interval else '[0, 1]'}")
    return p


def beta_cdf(x, a, b):
    """Regularised incomplete beta function I_x(a, b)."""
    _positive("beta_cdf", a, b)
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)):
        raise DomainError("beta_cdf: x must lie in [0, 1]")
    return _scalar(special.betainc(a, b, x))


def beta_quantile(p, a, b):
    _positive("beta_quantile", a, b)
    p = _probability("beta_quantile", p)
    return _scalar(special.betaincinv(a, b, p))


def gamma_cdf(x, shape, rate):
    """CDF of Gamma(shape, rate) with density proportional to x^(shape-1) e^(-rate x)."""
    _positive("gamma_cdf", shape, rate)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("gamma_cdf: x must be non-negative")
    return _scalar(special.gammainc(shape, np.asarray(rate) * x))


def gamma_quantile(p, shape, rate):
    _positive("gamma_quantile", shape, rate)
    p = _probability("gamma_quantile", p)
    return _scalar(special.gammaincinv(shape, p) / np.asarray(rate, dtype=float))


def normal_cdf(x):
    return _scalar(special.ndtr(x))


def normal_quantile(p):
    p = _probability("normal_quantile", p, open_interval=True)
    return _scalar(special.ndtri(p))


# ---------------------------------------------------------------------------
# Skew-normal
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SkewNormalParams:
    """Azzalini skew-normal with location ``phi``, scale ``omega`` and ``delta`` in (-1, 1).

    ``delta`` relates to the usual shape parameter by
    ``shape = delta / sqrt(1 - delta**2)``.
    """

    phi: float
    omega: float
    delta: float

    def __post_init__(self):
        if not self.omega > 0:
            raise DomainError(f"skew-normal scale must be positive, got {self.omega}")
        if not abs(self.delta) < 1:
            raise DomainError(f"skew-normal delta must lie in (-1, 1), got {self.delta}")

    @property
    def shape(self):
        return self.delta / math.sqrt(1.0 - self.delta**2)


def _sn_std_pdf(z, shape):
    return 2.0 * math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi) * special.ndtr(shape * z)


def skew_normal_pdf(x, p):
    z = (np.asarray(x, dtype=float) - p.phi) / p.omega
    out = 2.0 / p.omega * np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi) * special.ndtr(p.shape * z)
    return _scalar(out)


def skew_normal_cdf(x, p, tol=1e-10):
    """CDF by adaptive Gauss-Kronrod quadrature of the standardised density."""
    z = (float(x) - p.phi) / p.omega
    shape = p.shape
    if z == -math.inf:
        return 0.0
    if z == math.inf:
        return 1.0
    kw = dict(epsabs=tol * 1e-2, epsrel=1e-12, limit=200)
    # split at the origin, where the density peaks for any shape
    if z <= 0:
        val, _ = integrate.quad(_sn_std_pdf, -math.inf, z, args=(shape,), **kw)
    else:
        lower, _ = integrate.quad(_sn_std_pdf, -math.inf, 0.0, args=(shape,), **kw)
        upper, _ = integrate.quad(_sn_std_pdf, 0.0, z, args=(shape,), **kw)
        val = lower + upper
    return min(max(val, 0.0), 1.0)


def skew_normal_moments(p):
    """Mean, variance and skewness of the skew-normal."""
    d = p.delta
    mean = p.phi + p.omega * d * SQRT_2_OVER_PI
    var = p.omega**2 * (1.0 - 2.0 * d * d / math.pi)
    skew = (4.0 - math.pi) * d**3 / (2.0 * (math.pi / 2.0 - d * d) ** 1.5)
    return mean, var, skew


def skew_normal_quantile(q, p):
    """Quantile by Newton steps on the CDF, falling back to bracketed Brent."""
    if not 0.0 < q < 1.0:
        raise DomainError(f"skew_normal_quantile: q must lie in (0, 1), got {q}")
    mean, var, _ = skew_normal_moments(p)
    sd = math.sqrt(var)
    x = mean + sd * float(special.ndtri(q))
    xtol = 1e-12 * max(1.0, p.omega)
    for _ in range(20):
        dens = float(skew_normal_pdf(x, p))
        if not dens > 0:
            break
        step = (skew_normal_cdf(x, p) - q) / dens
        if not abs(step) < 4 * sd:
            break
        x -= step
        if abs(step) < xtol:
            return x
    lo, hi = mean - 4 * sd, mean + 4 * sd
    f = lambda t: skew_normal_cdf(t, p) - q
    while f(lo) > 0:
        lo -= 4 * sd
    while f(hi) < 0:
        hi += 4 * sd
    return optimize.brentq(f, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps)


# ---------------------------------------------------------------------------
# Samplers
# ---------------------------------------------------------------------------

def sample_gamma(stream, shape, rate, size=None):
    """Gamma(shape, rate) draws (rate parameterisation)."""
    _positive("sample_gamma", shape, rate)
    return _rng(stream).gamma(shape, 1.0 / np.asarray(rate, dtype=float), size)


def sample_beta(stream, a, b, size=None):
    _positive("sample_beta", a, b)
    return _rng(stream).beta(a, b, size)


def sample_normal(stream, mean, sd, size=None):
    if np.any(np.asarray(sd) < 0):
        raise DomainError("sample_normal: sd must be non-negative")
    return _rng(stream).normal(mean, sd, size)


def sample_poisson(stream, mean, size=None):
    if np.any(np.asarray(mean) < 0):
        raise DomainError("sample_poisson: mean must be non-negative")
    return _rng(stream).poisson(mean, size)


def sample_binomial(stream, n, p, size=None):
    n_arr = np.asarray(n)
    if np.any(n_arr < 0) or np.any(n_arr != np.round(n_arr)):
        raise DomainError("sample_binomial: n must be a non-negative integer")
    _probability("sample_binomial", p)
    return _rng(stream).binomial(n_arr.astype(np.int64), p, size)


# ---------------------------------------------------------------------------
# Jones-Faddy skew-t and multivariate t with four degrees of freedom
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SkewTParams:
    """Jones-Faddy skew-t: location ``l``, scale ``sigma``, tail parameters ``a``, ``b``.

    Degrees of freedom are ``a + b``; ``a < b`` skews the density to the left.
    """

    l: float
    sigma: float
    a: float
    b: float

    def __post_init__(self):
        if not (self.sigma > 0 and self.a > 0 and self.b > 0):
            raise DomainError(f"skew-t needs sigma, a, b > 0, got {self}")


def skew_t_from_beta(T, p):
    """Map Beta(a, b) variates ``T`` to skew-t variates."""
    T = np.asarray(T, dtype=float)
    t = math.sqrt(p.a + p.b) * (2.0 * T - 1.0) / (2.0 * np.sqrt(T * (1.0 - T)))
    return _scalar(p.l + p.sigma * t)


def sample_skew_t(stream, p, size=None):
    return skew_t_from_beta(_rng(stream).beta(p.a, p.b, size), p)


def skew_t_mode(p):
    a, b = p.a, p.b
    return p.l + p.sigma * (a - b) * math.sqrt(a + b) / math.sqrt((2 * a + 1) * (2 * b + 1))


def skew_t_log_density(x, p):
    a, b, nu = p.a, p.b, p.a + p.b
    t = (np.asarray(x, dtype=float) - p.l) / p.sigma
    s = np.sqrt(nu + t * t)
    # s + t and s - t without cancellation in either tail
    with np.errstate(divide="ignore", invalid="ignore"):
        s_plus = np.where(t >= 0, s + t, nu / (s - t))
        s_minus = np.where(t >= 0, nu / (s + t), s - t)
    log_c = (a + b - 1) * math.log(2.0) + special.betaln(a, b) + 0.5 * math.log(nu)
    out = ((a + 0.5) * np.log(s_plus / s) + (b + 0.5) * np.log(s_minus / s)
           - log_c - math.log(p.sigma))
    return _scalar(out)


def _chol(S):
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if not np.allclose(S, S.T, rtol=1e-10, atol=1e-14):
        raise MatrixError("scale matrix is not symmetric")
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise MatrixError("scale matrix is not positive definite") from exc


def mvt4_log_density(v, xi, S):
    """Log density of the multivariate t with 4 degrees of freedom.

    ``v`` may be a single point of shape (m,) or a batch of shape (N, m).
    """
    L = _chol(S)
    m = L.shape[0]
    xi = np.asarray(xi, dtype=float).reshape(m)
    v = np.asarray(v, dtype=float)
    single = v.ndim == 1
    diff = np.atleast_2d(v).reshape(-1, m) - xi
    z = np.linalg.solve(L, diff.T)
    maha = np.sum(z * z, axis=0)
    nu = 4.0
    out = (special.gammaln((nu + m) / 2) - special.gammaln(nu / 2)
           - 0.5 * m * math.log(nu * math.pi) - np.sum(np.log(np.diag(L)))
           - 0.5 * (nu + m) * np.log1p(maha / nu))
    return float(out[0]) if single else out


def sample_mvt4(stream, xi, S, size):
    rng = _rng(stream)
    L = _chol(S)
    m = L.shape[0]
    z = rng.standard_normal((size, m)) @ L.T
    w = rng.chisquare(4.0, size)
    return np.asarray(xi, dtype=float).reshape(1, m) + z / np.sqrt(w / 4.0)[:, None]
