"""Variance-stabilizing and normalizing transformations of F statistics."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .special import (
    ArrayLike,
    DomainError,
    FDist,
    _result,
    f_cdf,
    f_isf,
    f_quantile,
    f_sf,
    normal_quantile,
)


class TransformKind(str, enum.Enum):
    T1 = "T1"
    T2 = "T2"
    T3 = "T3"
    T4 = "T4"
    INVERSE_CDF = "InverseCdf"

    @classmethod
    def parse(cls, value) -> "TransformKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        for kind in cls:
            if kind.value.lower() == key or kind.name.lower().replace("_", "") == key:
                return kind
        raise ValueError(f"unknown transform {value!r}; expected one of T1, T2, T3, T4, InverseCdf")

    @property
    def needs_nu2_above_4(self) -> bool:
        return self in (TransformKind.T1, TransformKind.T2)


class UnsupportedTransformError(DomainError):
    """The requested transform is undefined for the given degrees of freedom."""

    def __init__(self, message, kind=None, study=None):
        super().__init__(message)
        self.kind = kind
        self.study = study


@dataclass(frozen=True)
class VstConstants:
    """Study-specific constants. ``c1``/``c2`` are ``None`` when nu2 <= 4 and
    ``mean_s`` is ``None`` when nu2 <= 2."""

    c1: Optional[float]
    c2: Optional[float]
    mean_s: Optional[float]
    delta: float


def c1_of(nu1: ArrayLike, nu2: ArrayLike) -> ArrayLike:
    """Squared coefficient of variation of S, 2(nu1+nu2-2) / [nu1 (nu2-4)]."""
    nu1 = np.asarray(nu1, dtype=float)
    nu2 = np.asarray(nu2, dtype=float)
    return 2.0 * (nu1 + nu2 - 2.0) / (nu1 * (nu2 - 4.0))


@lru_cache(maxsize=4096)
def _constants(nu1: float, nu2: float) -> VstConstants:
    d = FDist(nu1, nu2)
    c1 = float(c1_of(nu1, nu2)) if nu2 > 4 else None
    c2 = 2.0 / (nu2 - 4.0) if nu2 > 4 else None
    mean_s = nu2 / (nu2 - 2.0) if nu2 > 2 else None
    # equal dof: S and 1/S share a distribution, so the median is exactly 1
    delta = 1.0 if nu1 == nu2 else f_quantile(0.5, d)
    return VstConstants(c1=c1, c2=c2, mean_s=mean_s, delta=delta)


def constants(d: FDist) -> VstConstants:
    return _constants(float(d.nu1), float(d.nu2))


def median(d: FDist) -> ArrayLike:
    """Median of F(nu1, nu2), cached per degrees-of-freedom pair."""
    nu1, nu2 = np.asarray(d.nu1, float), np.asarray(d.nu2, float)
    if nu1.ndim == 0 and nu2.ndim == 0:
        return _constants(float(nu1), float(nu2)).delta
    nu1, nu2 = np.broadcast_arrays(nu1, nu2)
    if nu1.size > 256:
        return np.where(nu1 == nu2, 1.0, f_quantile(0.5, FDist(nu1, nu2)))
    flat = [_constants(float(a), float(b)).delta for a, b in zip(nu1.ravel(), nu2.ravel())]
    return np.array(flat).reshape(nu1.shape)


def _require_nu2(d: FDist, kind: TransformKind):
    if np.any(np.asarray(d.nu2) <= 4):
        raise UnsupportedTransformError(f"{kind.value} requires nu2 > 4 (got nu2={d.nu2})", kind=kind)


def _positive(s, name):
    sa = np.asarray(s, dtype=float)
    if np.any(~(sa > 0)):
        raise DomainError(f"{name} requires s > 0")
    return sa


def t1(s: ArrayLike, d: FDist) -> ArrayLike:
    """Log transform scaled by the coefficient of variation, centred to mean zero."""
    _require_nu2(d, TransformKind.T1)
    sa = _positive(s, "t1")
    nu1, nu2 = np.asarray(d.nu1, float), np.asarray(d.nu2, float)
    c1 = c1_of(nu1, nu2)
    mean_s = nu2 / (nu2 - 2.0)
    root = np.sqrt(c1)
    return _result(np.log(sa / mean_s) / root + root / 2.0, s, d.nu1, d.nu2)


def t2(s: ArrayLike, d: FDist) -> ArrayLike:
    _require_nu2(d, TransformKind.T2)
    sa = _positive(s, "t2")
    nu1, nu2 = np.asarray(d.nu1, float), np.asarray(d.nu2, float)
    c2 = 2.0 / (nu2 - 4.0)
    mean_s = nu2 / (nu2 - 2.0)
    r = nu2 / nu1
    rc2 = np.sqrt(c2)
    body = np.log((np.sqrt(sa) + np.sqrt(sa + r)) / (np.sqrt(mean_s) + np.sqrt(mean_s + r)))
    shift = rc2 * (2.0 * nu1 + nu2 - 2.0) / (4.0 * np.sqrt(nu1 * nu1 + 2.0 * nu1 * nu2 - 2.0 * nu1))
    return _result(2.0 / rc2 * body + shift, s, d.nu1, d.nu2)


def t3(s: ArrayLike, d: FDist) -> ArrayLike:
    """Paulson's cube-root normalization."""
    sa = np.asarray(s, dtype=float)
    if np.any(~(sa >= 0)):
        raise DomainError("t3 requires s >= 0")
    nu1, nu2 = np.asarray(d.nu1, float), np.asarray(d.nu2, float)
    a1 = 2.0 / (9.0 * nu1)
    a2 = 2.0 / (9.0 * nu2)
    cube = np.cbrt(sa)
    out = ((1.0 - a2) * cube - (1.0 - a1)) / np.sqrt(a2 * cube * cube + a1)
    return _result(out, s, d.nu1, d.nu2)


def t4(s: ArrayLike, d: FDist) -> ArrayLike:
    """Arc-cosh transform about the median, scaled by nu2/(nu2+1).

    Values at or below the median are reflected to the point with the same
    tail probability in the upper half before transforming.
    """
    sa = _positive(s, "t4")
    nu1, nu2 = np.asarray(d.nu1, float), np.asarray(d.nu2, float)
    delta = median(d)
    sa, nu1, nu2, delta = np.broadcast_arrays(sa, nu1, nu2, delta)
    upper = sa > delta
    star = sa.copy()
    low = ~upper
    if low.any():
        sub = FDist(nu1[low], nu2[low])
        tail = np.maximum(f_cdf(sa[low], sub), 1e-300)
        star[low] = f_isf(np.minimum(tail, 0.5), sub)
    sign = np.where(upper, 1.0, -1.0)
    base = np.arccosh(np.sqrt(nu1 * delta / nu2 + 1.0))
    arg = (nu1 * star + nu2) / np.sqrt(nu1 * nu2 * delta + nu2 * nu2)
    out = nu2 / (nu2 + 1.0) * sign * np.sqrt(nu2 / 2.0) * (np.arccosh(np.maximum(arg, 1.0)) - base)
    return _result(out, s, d.nu1, d.nu2)


def inverse_cdf_transform(s: ArrayLike, d: FDist) -> ArrayLike:
    """Exact normal score: Phi^{-1}(F(s))."""
    sa = _positive(s, "inverse_cdf_transform")
    lower = np.asarray(f_cdf(sa, d))
    upper = np.asarray(f_sf(sa, d))
    lower, upper = np.broadcast_arrays(lower, upper)
    tiny = np.finfo(float).tiny
    z = np.where(
        lower <= upper,
        normal_quantile(np.clip(lower, tiny, 0.5)),
        -np.asarray(normal_quantile(np.clip(upper, tiny, 0.5))),
    )
    return _result(z, s, d.nu1, d.nu2)


_DISPATCH = {
    TransformKind.T1: t1,
    TransformKind.T2: t2,
    TransformKind.T3: t3,
    TransformKind.T4: t4,
    TransformKind.INVERSE_CDF: inverse_cdf_transform,
}


def transform(kind, s: ArrayLike, rho: ArrayLike, d: FDist) -> ArrayLike:
    """Z-score of ``s/rho`` under the selected transform."""
    kind = TransformKind.parse(kind)
    if np.any(np.asarray(rho) <= 0):
        raise DomainError("rho must be positive")
    ratio = np.asarray(s, dtype=float) / np.asarray(rho, dtype=float)
    return _result(_DISPATCH[kind](ratio, d), s, rho, d.nu1, d.nu2)
