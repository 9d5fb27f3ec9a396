"""Point and interval estimation of a common variance ratio (fixed effect)
and of the mean log-ratio plus between-study variance (random effects)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .meta_tests import normalize_weights
from .special import FDist, f_logpdf, normal_quantile, t_quantile
from .vst import TransformKind, UnsupportedTransformError, c1_of, transform

MODELS = ("VstPivot", "VstRoot", "NormalFE", "FDensityFE", "NormalRE")
BOUNDARY_TAU2 = 1e-10


class EstimationError(RuntimeError):
    """An estimator could not produce a result for the given data."""


@dataclass(frozen=True)
class StudyF:
    """Ratio of sample variances ``s`` from arms of sizes ``n1`` (numerator) and ``n2``."""

    s: float
    n1: int
    n2: int
    study_id: Optional[str] = None

    def __post_init__(self):
        if not (self.s > 0 and math.isfinite(self.s)):
            raise ValueError(f"variance ratio must be positive and finite, got {self.s}")
        if self.n1 < 2 or self.n2 < 2:
            raise ValueError(f"arm sizes must be at least 2, got ({self.n1}, {self.n2})")

    @property
    def nu1(self) -> int:
        return self.n1 - 1

    @property
    def nu2(self) -> int:
        return self.n2 - 1

    @property
    def fdist(self) -> FDist:
        return FDist(self.nu1, self.nu2)


@dataclass(frozen=True)
class RatioEstimate:
    rho_hat: float
    ci_low: float
    ci_high: float
    log_variance: float
    alpha: float
    model: str
    tau2_hat: Optional[float] = None
    tau2_se: Optional[float] = None
    boundary: bool = False
    interval: str = "normal"

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        if not self.ci_low <= self.rho_hat <= self.ci_high:
            raise ValueError("interval must contain the point estimate")
        if (self.tau2_hat is not None) != (self.model == "NormalRE"):
            raise ValueError("tau2 fields are reported for the random-effects model only")

    @property
    def log_rho_hat(self) -> float:
        return math.log(self.rho_hat)

    @property
    def width(self) -> float:
        return self.ci_high - self.ci_low

    def covers(self, rho: float) -> bool:
        return self.ci_low <= rho <= self.ci_high


def _arrays(studies: Sequence[StudyF]):
    if len(studies) == 0:
        raise ValueError("at least one study is required")
    s = np.array([st.s for st in studies], dtype=float)
    nu1 = np.array([st.nu1 for st in studies], dtype=float)
    nu2 = np.array([st.nu2 for st in studies], dtype=float)
    return s, nu1, nu2


def _check_alpha(alpha):
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")


def _c1(studies) -> np.ndarray:
    _, nu1, nu2 = _arrays(studies)
    small = np.flatnonzero(nu2 <= 4)
    if small.size:
        k = int(small[0])
        raise UnsupportedTransformError(
            f"nu2 <= 4 in study {k + 1} (nu2={int(nu2[k])}); log-normal approximation undefined", study=k
        )
    return c1_of(nu1, nu2)


def _centred_logs(studies) -> tuple[np.ndarray, np.ndarray]:
    """ln s_k - E[ln s_k | rho = 1] under the log-normal approximation, and c1."""
    s, _, nu2 = _arrays(studies)
    c1 = _c1(studies)
    return np.log(s) - (np.log(nu2 / (nu2 - 2.0)) - c1 / 2.0), c1


def _wald(theta, var, alpha, model, quantile=None, **extra) -> RatioEstimate:
    q = normal_quantile(1 - alpha / 2) if quantile is None else quantile
    half = q * math.sqrt(var)
    return RatioEstimate(
        rho_hat=math.exp(theta),
        ci_low=math.exp(theta - half),
        ci_high=math.exp(theta + half),
        log_variance=var,
        alpha=alpha,
        model=model,
        **extra,
    )


def default_weights(studies: Sequence[StudyF]) -> np.ndarray:
    """Weights proportional to 1/sqrt(c1_k), normalized to sum to one."""
    return normalize_weights(1.0 / np.sqrt(_c1(studies)))


def _weights(studies, w):
    return default_weights(studies) if w is None else normalize_weights(w, len(studies))


def vst_pivot_estimate(studies: Sequence[StudyF], w=None, alpha: float = 0.05) -> RatioEstimate:
    """Closed-form estimate from inverting the weighted mean of T1 scores."""
    _check_alpha(alpha)
    yc, c1 = _centred_logs(studies)
    w = _weights(studies, w)
    a = w / np.sqrt(c1)
    total = math.fsum(a)
    theta = math.fsum(a * yc) / total
    var = math.fsum(w * w) / total**2
    return _wald(theta, var, alpha, "VstPivot")


def normal_fe_mle(studies: Sequence[StudyF], alpha: float = 0.05) -> RatioEstimate:
    """Fixed-effect MLE under ln S_k ~ N(omega + ln E[S] - c1/2, c1)."""
    _check_alpha(alpha)
    yc, c1 = _centred_logs(studies)
    prec = 1.0 / c1
    total = math.fsum(prec)
    theta = math.fsum(prec * yc) / total
    return _wald(theta, 1.0 / total, alpha, "NormalFE")


# ---------------------------------------------------------------------------
# Root-solving on the weighted Z pivot
# ---------------------------------------------------------------------------

def _bracket_decreasing(f, x0, target, step=1.0, max_doublings=200):
    """Find [lo, hi] with f(lo) >= target >= f(hi) for decreasing f."""
    f0 = f(x0) - target
    if f0 == 0:
        return x0, x0
    direction = 1.0 if f0 > 0 else -1.0
    a, fa = x0, f0
    for _ in range(max_doublings):
        b = a + direction * step
        if abs(b) > 700:
            break
        fb = f(b) - target
        if fb == 0 or (fb > 0) != (fa > 0):
            return (a, b) if direction > 0 else (b, a)
        a, fa = b, fb
        step *= 2.0
    raise EstimationError("could not bracket the pivot root; the transformed statistics may be bounded")


def weighted_pivot(studies: Sequence[StudyF], kind, w=None):
    """Return Z_w(theta) = sum w_k T(s_k e^-theta) / sqrt(sum w_k^2) as a callable."""
    kind = TransformKind.parse(kind)
    s, nu1, nu2 = _arrays(studies)
    w = _weights(studies, w)
    d = FDist(nu1, nu2)
    norm = math.sqrt(math.fsum(w * w))

    def pivot(theta: float) -> float:
        return math.fsum(w * np.asarray(transform(kind, s, math.exp(theta), d))) / norm

    return pivot, w


def vst_root_estimate(studies: Sequence[StudyF], w=None, kind=TransformKind.T3, alpha: float = 0.05) -> RatioEstimate:
    """Estimate and interval from solving Z_w(rho) = 0 and Z_w(rho) = +/- z."""
    _check_alpha(alpha)
    pivot, w = weighted_pivot(studies, kind, w)
    s, _, _ = _arrays(studies)
    theta0 = math.fsum(w * np.log(s))
    z = normal_quantile(1 - alpha / 2)
    roots = []
    for target in (0.0, z, -z):
        lo, hi = _bracket_decreasing(pivot, theta0, target)
        if lo == hi:
            roots.append(lo)
            continue
        roots.append(brentq(lambda t: pivot(t) - target, lo, hi, xtol=1e-12, rtol=4 * np.finfo(float).eps, maxiter=200))
    theta, t_low, t_high = roots
    # the log-scale variance implied by the interval, for reporting only
    var = ((t_high - t_low) / (2 * z)) ** 2
    return RatioEstimate(
        rho_hat=math.exp(theta), ci_low=math.exp(t_low), ci_high=math.exp(t_high),
        log_variance=var, alpha=alpha, model="VstRoot",
    )


# ---------------------------------------------------------------------------
# Fixed-effect MLE on the rescaled F density
# ---------------------------------------------------------------------------

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_max(f, lo, hi, tol=1e-10, maxit=500):
    c = hi - _GOLDEN * (hi - lo)
    d = lo + _GOLDEN * (hi - lo)
    fc, fd = f(c), f(d)
    for _ in range(maxit):
        if hi - lo <= tol * max(1.0, abs(c)):
            break
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - _GOLDEN * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _GOLDEN * (hi - lo)
            fd = f(d)
    return c if fc >= fd else d


def f_density_loglik(theta: float, s, nu1, nu2) -> float:
    """sum_k ln[(1/rho) g(s_k/rho; nu1_k, nu2_k)] with rho = e^theta."""
    x = s * math.exp(-theta)
    return math.fsum(np.asarray(f_logpdf(x, FDist(nu1, nu2)))) - theta * len(s)


def _f_density_score(theta, s, nu1, nu2):
    x = s * math.exp(-theta)
    frac = nu1 * x / (nu2 + nu1 * x)
    score = math.fsum(-nu1 / 2.0 + (nu1 + nu2) / 2.0 * frac)
    info = math.fsum((nu1 + nu2) / 2.0 * nu1 * nu2 * x / (nu2 + nu1 * x) ** 2)
    return score, info


def f_density_fe_mle(studies: Sequence[StudyF], alpha: float = 0.05) -> RatioEstimate:
    """Fixed-effect MLE of ln(rho) from the exact rescaled F likelihood."""
    _check_alpha(alpha)
    s, nu1, nu2 = _arrays(studies)

    def ll(theta):
        return f_density_loglik(theta, s, nu1, nu2)

    if not np.all(np.isfinite(np.log(s))):
        raise EstimationError("non-finite likelihood")
    centre = float(np.mean(np.log(s)))
    half = 2.0
    for _ in range(60):
        lo, hi = centre - half, centre + half
        theta = _golden_max(ll, lo, hi, tol=1e-6)
        if lo + 1e-3 * half < theta < hi - 1e-3 * half:
            break
        centre, half = theta, half * 2.0
    else:
        raise EstimationError("could not bracket the F-likelihood maximum")
    for _ in range(500):
        score, info = _f_density_score(theta, s, nu1, nu2)
        step = score / info
        theta += step
        if abs(step) < 1e-13 * max(1.0, abs(theta)):
            break
    else:
        raise EstimationError("Newton polish did not converge after 500 iterations")
    # the analytic observed information is used for the variance; the second
    # difference only guards concavity, since its step (and hence its
    # truncation error) would otherwise break exact scale equivariance
    h = 1e-4 * max(1.0, abs(theta))
    curvature = -(ll(theta + h) - 2.0 * ll(theta) + ll(theta - h)) / (h * h)
    _, info = _f_density_score(theta, s, nu1, nu2)
    if not (curvature > 0 and info > 0):
        raise EstimationError("log-likelihood is not concave at the optimum")
    return _wald(theta, 1.0 / info, alpha, "FDensityFE")


# ---------------------------------------------------------------------------
# Random-effects MLE on the log-normal approximation
# ---------------------------------------------------------------------------

def re_loglik(omega: float, psi: float, yc, c1) -> float:
    """-1/2 sum[ln(c1_k + tau^2) + (y'_k - omega)^2 / (c1_k + tau^2)], tau = e^psi."""
    v = c1 + math.exp(2.0 * psi)
    r = yc - omega
    return -0.5 * math.fsum(np.log(v) + r * r / v)


def re_score(omega: float, tau2: float, yc, c1) -> tuple[float, float]:
    """Partial derivatives of the random-effects log-likelihood in (omega, tau^2)."""
    v = c1 + tau2
    r = yc - omega
    d_omega = math.fsum(r / v)
    d_tau2 = 0.5 * math.fsum(r * r / (v * v) - 1.0 / v)
    return d_omega, d_tau2


def _profile_omega(tau2, yc, c1):
    prec = 1.0 / (c1 + tau2)
    return math.fsum(prec * yc) / math.fsum(prec)


def _moment_tau2(yc, c1):
    w = 1.0 / c1
    omega = math.fsum(w * yc) / math.fsum(w)
    q = math.fsum(w * (yc - omega) ** 2)
    denom = math.fsum(w) - math.fsum(w * w) / math.fsum(w)
    return max(0.0, (q - (len(yc) - 1)) / denom) if denom > 0 else 0.0


def _newton_polish(omega, psi, yc, c1, maxit=100):
    """Newton on (omega, psi) with analytic gradient and differenced Hessian."""

    def grad(o, p):
        t2 = math.exp(2.0 * p)
        g_o, g_t = re_score(o, t2, yc, c1)
        return np.array([g_o, 2.0 * t2 * g_t])

    current = re_loglik(omega, psi, yc, c1)
    for _ in range(maxit):
        g = grad(omega, psi)
        h = 1e-5
        hess = np.empty((2, 2))
        hess[:, 0] = (grad(omega + h, psi) - grad(omega - h, psi)) / (2 * h)
        hess[:, 1] = (grad(omega, psi + h) - grad(omega, psi - h)) / (2 * h)
        hess = 0.5 * (hess + hess.T)
        try:
            step = -np.linalg.solve(hess, g)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.linalg.eigvalsh(hess) < 0):
            break
        scale = 1.0
        while scale > 1e-8:
            o_new, p_new = omega + scale * step[0], psi + scale * step[1]
            trial = re_loglik(o_new, p_new, yc, c1)
            if trial >= current - 1e-14:
                break
            scale /= 2.0
        else:
            break
        moved = max(abs(o_new - omega), abs(p_new - psi))
        gain = trial - current
        omega, psi, current = o_new, p_new, trial
        if abs(gain) < 1e-12 and moved < 1e-10:
            break
    return omega, psi


def normal_re_mle(studies: Sequence[StudyF], alpha: float = 0.05, interval: str = "t") -> RatioEstimate:
    """Random-effects MLE of (ln rho, tau^2) with ln S_k ~ N(mu_k, c1_k + tau^2).

    ``interval="t"`` uses the t_{K-1} percentile for the ratio interval;
    ``interval="normal"`` uses the standard normal percentile.
    """
    _check_alpha(alpha)
    if len(studies) < 2:
        raise EstimationError("the random-effects model needs at least two studies")
    if interval not in ("t", "normal"):
        raise ValueError("interval must be 't' or 'normal'")
    yc, c1 = _centred_logs(studies)

    def profile(psi):
        return re_loglik(_profile_omega(math.exp(2.0 * psi), yc, c1), psi, yc, c1)

    psi_min = 0.5 * math.log(BOUNDARY_TAU2)
    spread = float(np.var(yc)) + float(np.max(c1))
    psi_max = 0.5 * math.log(max(10.0 * spread, 1.0))
    psi0 = 0.5 * math.log(max(1e-8, _moment_tau2(yc, c1)))
    grid = np.unique(np.clip(np.append(np.linspace(psi_min, psi_max, 81), psi0), psi_min, psi_max))
    values = np.array([profile(p) for p in grid])
    i = int(np.argmax(values))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    psi = _golden_max(profile, lo, hi, tol=1e-12)
    omega = _profile_omega(math.exp(2.0 * psi), yc, c1)

    # boundary: the likelihood increases as tau^2 -> 0
    _, slope_at_zero = re_score(_profile_omega(0.0, yc, c1), 0.0, yc, c1)
    boundary = bool(psi <= psi_min + 1e-6 and slope_at_zero <= 0)
    if boundary:
        tau2 = 0.0
        omega = _profile_omega(0.0, yc, c1)
    else:
        omega, psi = _newton_polish(omega, psi, yc, c1)
        tau2 = math.exp(2.0 * psi)
        if tau2 < BOUNDARY_TAU2:
            tau2, boundary = 0.0, True
            omega = _profile_omega(0.0, yc, c1)

    v = c1 + tau2
    var_omega = 1.0 / math.fsum(1.0 / v)
    var_tau2 = 2.0 / math.fsum(1.0 / (v * v))
    quantile = t_quantile(1 - alpha / 2, len(studies) - 1) if interval == "t" else None
    return _wald(
        omega, var_omega, alpha, "NormalRE", quantile=quantile,
        tau2_hat=tau2, tau2_se=math.sqrt(var_tau2), boundary=boundary, interval=interval,
    )


ESTIMATORS = {
    "pivot": lambda studies, alpha=0.05, **kw: vst_pivot_estimate(studies, kw.get("w"), alpha),
    "fe-normal": lambda studies, alpha=0.05, **kw: normal_fe_mle(studies, alpha),
    "fe-f": lambda studies, alpha=0.05, **kw: f_density_fe_mle(studies, alpha),
    "re": lambda studies, alpha=0.05, **kw: normal_re_mle(studies, alpha, kw.get("interval", "t")),
}


def estimate(model: str, studies: Sequence[StudyF], alpha: float = 0.05, **kw) -> RatioEstimate:
    try:
        fn = ESTIMATORS[model]
    except KeyError:
        raise ValueError(f"unknown model {model!r}; expected one of {sorted(ESTIMATORS)}") from None
    return fn(studies, alpha, **kw)
