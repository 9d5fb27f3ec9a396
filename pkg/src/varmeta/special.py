"""Probability kernel: incomplete beta, F/t/chi-square/normal CDFs and
quantiles, and seeded samplers.

Every function broadcasts over numpy arrays and returns a plain ``float``
when all inputs are scalars.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import special as _sc

ArrayLike = Union[float, np.ndarray]

_EPS = 1e-16
_TINY = 1e-300
_CF_MAXIT = 5000
_ROOT_MAXIT = 200


class DomainError(ValueError):
    """Raised when an argument lies outside a function's domain."""


@dataclass(frozen=True)
class FDist:
    """Central F distribution with ``nu1`` numerator and ``nu2`` denominator
    degrees of freedom. Fields may be arrays, in which case they broadcast."""

    nu1: ArrayLike
    nu2: ArrayLike

    def __post_init__(self):
        if np.any(np.asarray(self.nu1) <= 0) or np.any(np.asarray(self.nu2) <= 0):
            raise DomainError(f"degrees of freedom must be positive, got {self.nu1}, {self.nu2}")


def _result(value, *inputs):
    if all(np.ndim(v) == 0 for v in inputs):
        return float(np.asarray(value).reshape(()))
    return value


# ---------------------------------------------------------------------------
# Gamma and beta functions
# ---------------------------------------------------------------------------

def log_gamma(x: ArrayLike) -> ArrayLike:
    """Natural log of the gamma function for ``x > 0``."""
    xa = np.asarray(x, dtype=float)
    if np.any(~(xa > 0)):
        raise DomainError("log_gamma requires x > 0")
    return _result(_sc.gammaln(xa), x)


def _stirling_corr(x):
    # lgamma(x) - [(x - 1/2) ln x - x + ln(2 pi)/2], accurate to ~1e-16 for x >= 15
    x2 = 1.0 / (x * x)
    return (1.0 / 12 - x2 * (1.0 / 360 - x2 * (1.0 / 1260 - x2 * (1.0 / 1680 - x2 / 1188)))) / x


def _log_beta(a, b):
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    plain = _sc.gammaln(lo) + _sc.gammaln(hi) - _sc.gammaln(lo + hi)
    big = hi >= 15.0
    if not big.any():
        return plain
    # lgamma(lo + hi) - lgamma(hi) without cancelling two huge numbers
    with np.errstate(divide="ignore", invalid="ignore"):
        h = np.where(big, hi, 15.0)
        shift = ((h - 0.5) * np.log1p(lo / h) + lo * np.log(lo + h) - lo
                 + _stirling_corr(lo + h) - _stirling_corr(h))
    return np.where(big, _sc.gammaln(lo) - shift, plain)


def log_beta(a: ArrayLike, b: ArrayLike) -> ArrayLike:
    return _result(_log_beta(a, b), a, b)


def _betacf(a, b, x):
    """Continued fraction for I_x(a, b) by the modified Lentz method."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = np.ones_like(x)
    d = 1.0 - qab * x / qap
    d = np.where(np.abs(d) < _TINY, _TINY, d)
    d = 1.0 / d
    h = d.copy()
    active = np.ones(x.shape, dtype=bool)
    for m in range(1, _CF_MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _TINY, _TINY, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _TINY, _TINY, c)
        d = 1.0 / d
        h = np.where(active, h * d * c, h)
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _TINY, _TINY, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _TINY, _TINY, c)
        d = 1.0 / d
        delta = d * c
        h = np.where(active, h * delta, h)
        active &= np.abs(delta - 1.0) > _EPS
        if not active.any():
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def _betainc_pair(a, b, x, y):
    """Return ``(I_x(a,b), 1 - I_x(a,b))`` with ``y = 1 - x`` supplied exactly.

    The branch evaluated directly is the one with the faster-converging
    continued fraction; the other tail is its complement.
    """
    a, b, x, y = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, x, y)))
    lower = np.zeros(x.shape)
    upper = np.ones(x.shape)
    edge_hi = y <= 0
    lower[edge_hi], upper[edge_hi] = 1.0, 0.0
    inner = (x > 0) & (y > 0)
    if inner.any():
        ai, bi, xi, yi = a[inner], b[inner], x[inner], y[inner]
        swap = xi >= (ai + 1.0) / (ai + bi + 2.0)
        aa = np.where(swap, bi, ai)
        bb = np.where(swap, ai, bi)
        xx = np.where(swap, yi, xi)
        yy = np.where(swap, xi, yi)
        # log of the larger argument via log1p of the smaller keeps b*log(y) exact-ish for large b
        small_x = xx <= yy
        with np.errstate(divide="ignore"):
            lx = np.where(small_x, np.log(xx), np.log1p(-yy))
            ly = np.where(small_x, np.log1p(-xx), np.log(yy))
        logfront = aa * lx + bb * ly - _log_beta(aa, bb)
        direct = np.exp(logfront) * _betacf(aa, bb, xx) / aa
        direct = np.clip(direct, 0.0, 1.0)
        lower[inner] = np.where(swap, 1.0 - direct, direct)
        upper[inner] = np.where(swap, direct, 1.0 - direct)
    return lower, upper


def reg_inc_beta(a: ArrayLike, b: ArrayLike, x: ArrayLike) -> ArrayLike:
    """Regularized incomplete beta function I_x(a, b)."""
    aa, bb, xx = (np.asarray(v, dtype=float) for v in (a, b, x))
    if np.any(~(aa > 0)) or np.any(~(bb > 0)):
        raise DomainError("reg_inc_beta requires a > 0 and b > 0")
    if np.any(~((xx >= 0) & (xx <= 1))):
        raise DomainError("reg_inc_beta requires 0 <= x <= 1")
    lower, _ = _betainc_pair(aa, bb, xx, 1.0 - xx)
    return _result(lower, a, b, x)


def _beta_inverse(a, b, p):
    """Solve I_x(a, b) = p for x where p <= 1/2 is expected for accuracy.

    Safeguarded Newton iteration on t = logit(x) applied to log I; any step
    leaving the current bracket is replaced by bisection.
    """
    a, b, p = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, p)))
    a, b, p = a.ravel(), b.ravel(), p.ravel()
    lo = np.full(p.shape, -745.0)
    hi = np.full(p.shape, 745.0)
    t = np.log(a / b)
    logp = np.log(p)
    lbeta = _log_beta(a, b)
    active = np.ones(p.shape, dtype=bool)
    for _ in range(_ROOT_MAXIT):
        x = _sc.expit(t)
        y = _sc.expit(-t)
        cdf, _ = _betainc_pair(a, b, x, y)
        diff = cdf - p
        active &= np.abs(diff) > 1e-14 * p
        if not active.any():
            break
        lo = np.where(diff < 0, t, lo)
        hi = np.where(diff > 0, t, hi)
        # d log I / dt = pdf(x) * x * (1 - x) / I
        logdens = a * np.log(x) + b * np.log(y) - lbeta
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            slope = np.exp(logdens) / np.maximum(cdf, _TINY)
            step = (np.log(np.maximum(cdf, _TINY)) - logp) / slope
            t_new = t - step
        bad = ~np.isfinite(t_new) | (t_new < lo) | (t_new > hi)
        t_new = np.where(bad, 0.5 * (lo + hi), t_new)
        moved = np.abs(t_new - t) > 1e-15 * np.maximum(1.0, np.abs(t))
        t = np.where(active, t_new, t)
        active &= moved & (hi - lo > 1e-15 * np.maximum(1.0, np.abs(t)))
        if not active.any():
            break
    return _sc.expit(t), _sc.expit(-t)


# ---------------------------------------------------------------------------
# F distribution
# ---------------------------------------------------------------------------

def _f_args(s, d):
    nu1 = np.asarray(d.nu1, dtype=float)
    nu2 = np.asarray(d.nu2, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(~(s >= 0)):
        raise DomainError("F distribution requires s >= 0")
    return s, nu1, nu2


def _f_tails(s, nu1, nu2):
    with np.errstate(over="ignore", invalid="ignore"):
        num = nu1 * s
        x = num / (num + nu2)
        y = nu2 / (num + nu2)
    x = np.where(np.isinf(s), 1.0, x)
    y = np.where(np.isinf(s), 0.0, y)
    return _betainc_pair(nu1 / 2.0, nu2 / 2.0, x, y)


def f_cdf(s: ArrayLike, d: FDist) -> ArrayLike:
    """CDF of the F(nu1, nu2) distribution."""
    sa, nu1, nu2 = _f_args(s, d)
    lower, _ = _f_tails(sa, nu1, nu2)
    return _result(lower, s, d.nu1, d.nu2)


def f_sf(s: ArrayLike, d: FDist) -> ArrayLike:
    """Upper-tail probability P(S > s), evaluated without cancellation."""
    sa, nu1, nu2 = _f_args(s, d)
    _, upper = _f_tails(sa, nu1, nu2)
    return _result(upper, s, d.nu1, d.nu2)


def f_logpdf(s: ArrayLike, d: FDist) -> ArrayLike:
    sa, nu1, nu2 = _f_args(s, d)
    with np.errstate(divide="ignore"):
        out = (
            0.5 * nu1 * np.log(nu1 / nu2)
            + (0.5 * nu1 - 1.0) * np.log(sa)
            - 0.5 * (nu1 + nu2) * np.log1p(nu1 * sa / nu2)
            - _log_beta(nu1 / 2, nu2 / 2)
        )
    return _result(out, s, d.nu1, d.nu2)


def _f_inverse(p_lower, p_upper, nu1, nu2):
    """F quantile given both tail probabilities; the smaller one drives the solve."""
    p_lower, p_upper, nu1, nu2 = np.broadcast_arrays(p_lower, p_upper, nu1, nu2)
    shape = p_lower.shape
    use_lower = (p_lower <= p_upper).ravel()
    pl, pu = p_lower.ravel(), p_upper.ravel()
    a, b = (nu1 / 2.0).ravel(), (nu2 / 2.0).ravel()
    x = np.empty(pl.shape)
    y = np.empty(pl.shape)
    if use_lower.any():
        xl, yl = _beta_inverse(a[use_lower], b[use_lower], pl[use_lower])
        x[use_lower], y[use_lower] = xl, yl
    if (~use_lower).any():
        yu, xu = _beta_inverse(b[~use_lower], a[~use_lower], pu[~use_lower])
        x[~use_lower], y[~use_lower] = xu, yu
    s = (nu2.ravel() * x) / (nu1.ravel() * y)
    return s.reshape(shape)


def _check_prob(p, name):
    pa = np.asarray(p, dtype=float)
    if np.any(~((pa > 0) & (pa < 1))):
        raise DomainError(f"{name} requires 0 < p < 1")
    return pa


def f_quantile(p: ArrayLike, d: FDist) -> ArrayLike:
    """Inverse CDF of F(nu1, nu2)."""
    pa = _check_prob(p, "f_quantile")
    s = _f_inverse(pa, 1.0 - pa, np.asarray(d.nu1, float), np.asarray(d.nu2, float))
    return _result(s, p, d.nu1, d.nu2)


def f_isf(q: ArrayLike, d: FDist) -> ArrayLike:
    """Inverse survival function: s with P(S > s) = q."""
    qa = _check_prob(q, "f_isf")
    s = _f_inverse(1.0 - qa, qa, np.asarray(d.nu1, float), np.asarray(d.nu2, float))
    return _result(s, q, d.nu1, d.nu2)


# ---------------------------------------------------------------------------
# Normal, chi-square and Student t
# ---------------------------------------------------------------------------

def normal_cdf(z: ArrayLike) -> ArrayLike:
    return _result(_sc.ndtr(np.asarray(z, dtype=float)), z)


def normal_sf(z: ArrayLike) -> ArrayLike:
    return _result(_sc.ndtr(-np.asarray(z, dtype=float)), z)


def normal_quantile(p: ArrayLike) -> ArrayLike:
    pa = _check_prob(p, "normal_quantile")
    return _result(_sc.ndtri(pa), p)


def chi2_cdf(x: ArrayLike, df: ArrayLike) -> ArrayLike:
    """Lower regularized gamma P(df/2, x/2)."""
    xa, dfa = np.asarray(x, dtype=float), np.asarray(df, dtype=float)
    if np.any(~(xa >= 0)) or np.any(~(dfa > 0)):
        raise DomainError("chi2_cdf requires x >= 0 and df > 0")
    return _result(_sc.gammainc(dfa / 2.0, xa / 2.0), x, df)


def chi2_sf(x: ArrayLike, df: ArrayLike) -> ArrayLike:
    xa, dfa = np.asarray(x, dtype=float), np.asarray(df, dtype=float)
    if np.any(~(xa >= 0)) or np.any(~(dfa > 0)):
        raise DomainError("chi2_sf requires x >= 0 and df > 0")
    return _result(_sc.gammaincc(dfa / 2.0, xa / 2.0), x, df)


def t_cdf(t: ArrayLike, df: ArrayLike) -> ArrayLike:
    ta, dfa = np.asarray(t, dtype=float), np.asarray(df, dtype=float)
    if np.any(~(dfa > 0)):
        raise DomainError("t_cdf requires df > 0")
    t2 = ta * ta
    # P(|T| > |t|) = I_{df/(df+t^2)}(df/2, 1/2)
    two_tail, _ = _betainc_pair(dfa / 2.0, 0.5, dfa / (dfa + t2), t2 / (dfa + t2))
    out = np.where(ta > 0, 1.0 - 0.5 * two_tail, 0.5 * two_tail)
    return _result(out, t, df)


def t_quantile(p: ArrayLike, df: ArrayLike) -> ArrayLike:
    """Student t quantile by inverting the incomplete-beta form of its CDF."""
    pa = _check_prob(p, "t_quantile")
    dfa = np.asarray(df, dtype=float)
    if np.any(~(dfa > 0)):
        raise DomainError("t_quantile requires df > 0")
    pa, dfa = np.broadcast_arrays(pa, dfa)
    tail = np.minimum(pa, 1.0 - pa)
    two_tail = 2.0 * tail
    centre = 1.0 - two_tail
    # x = df/(df+t^2) solves I_x(df/2, 1/2) = two_tail; solve in whichever tail is smaller
    use_x = (two_tail <= centre).ravel()
    a, b = (dfa / 2.0).ravel(), np.full(dfa.size, 0.5)
    x = np.empty(dfa.size)
    y = np.empty(dfa.size)
    if use_x.any():
        x[use_x], y[use_x] = _beta_inverse(a[use_x], b[use_x], two_tail.ravel()[use_x])
    mid = ~use_x & (centre.ravel() <= 0)
    x[mid], y[mid] = 1.0, 0.0
    rest = ~use_x & ~mid
    if rest.any():
        y[rest], x[rest] = _beta_inverse(b[rest], a[rest], centre.ravel()[rest])
    mag = np.sqrt(dfa.ravel() * y / x).reshape(pa.shape)
    out = np.where(pa < 0.5, -mag, np.where(pa == 0.5, 0.0, mag))
    return _result(out, p, df)


# ---------------------------------------------------------------------------
# Seeded sampling
# ---------------------------------------------------------------------------

def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator (period 2**128) for a 64-bit seed."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def derive_rng(seed: int, *index: int) -> np.random.Generator:
    """Independent generator for task ``index`` under master ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(i) for i in index))
    return np.random.Generator(np.random.PCG64(ss))


def sample_chi2(df: ArrayLike, rng: np.random.Generator, size=None) -> ArrayLike:
    return 2.0 * rng.standard_gamma(np.asarray(df, dtype=float) / 2.0, size=size)


def sample_f(d: FDist, rho: ArrayLike, rng: np.random.Generator, size=None) -> ArrayLike:
    """Draw rho * (chi2_nu1/nu1) / (chi2_nu2/nu2)."""
    if np.any(np.asarray(rho) <= 0):
        raise DomainError("sample_f requires rho > 0")
    num = sample_chi2(d.nu1, rng, size) / np.asarray(d.nu1, dtype=float)
    den = sample_chi2(d.nu2, rng, size) / np.asarray(d.nu2, dtype=float)
    out = np.asarray(rho) * num / den
    return float(out) if np.ndim(out) == 0 else out


def sample_normal(mean: ArrayLike, sd: ArrayLike, rng: np.random.Generator, size=None) -> ArrayLike:
    if np.any(np.asarray(sd) < 0):
        raise DomainError("sample_normal requires sd >= 0")
    out = rng.normal(mean, sd, size=size)
    return float(out) if np.ndim(out) == 0 else out


__all__ = [
    "DomainError", "FDist", "log_gamma", "log_beta", "reg_inc_beta",
    "f_cdf", "f_sf", "f_logpdf", "f_quantile", "f_isf",
    "normal_cdf", "normal_sf", "normal_quantile", "chi2_cdf", "chi2_sf",
    "t_cdf", "t_quantile", "make_rng", "derive_rng", "sample_chi2",
    "sample_f", "sample_normal",
]
