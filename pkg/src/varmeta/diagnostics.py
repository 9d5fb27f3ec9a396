"""Q-Q data, per-study F-tests for forest plots, and the incremental-inclusion p-value curve."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .estimators import StudyF, default_weights
from .meta_tests import DEFAULT_MC_REPLICATES, x2_weighted_test, z_weighted_test
from .special import f_cdf, f_quantile, f_sf, normal_quantile
from .vst import TransformKind, UnsupportedTransformError, c1_of, transform

WEIGHT_RULES = ("inverse-sqrt-c1", "equal")
INCREMENTAL_TESTS = ("Zw", "X2w")


@dataclass(frozen=True)
class QQData:
    theoretical: tuple
    observed: tuple
    transform: TransformKind
    study_ids: tuple = ()

    def __post_init__(self):
        if len(self.theoretical) != len(self.observed):
            raise ValueError("theoretical and observed lengths differ")
        if any(b < a for a, b in zip(self.observed, self.observed[1:])):
            raise ValueError("observed values must be nondecreasing")

    def pairs(self):
        return list(zip(self.theoretical, self.observed))


@dataclass(frozen=True)
class ForestRow:
    study_id: str
    ratio: float
    ci_low: float
    ci_high: float
    p_value: float

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError("p-value outside [0, 1]")
        if not self.ci_low < self.ratio < self.ci_high:
            raise ValueError("interval must bracket the ratio")


@dataclass(frozen=True)
class IncrementalPoint:
    k_star: int
    included_study_ids: tuple
    p_value: float
    statistic: float


@dataclass(frozen=True)
class IncrementalCurve:
    points: tuple
    transform: TransformKind
    test: str

    @property
    def p_values(self) -> np.ndarray:
        return np.array([p.p_value for p in self.points])

    def local_minima(self) -> list[int]:
        """k* values whose p-value is below both neighbours (interior points only)."""
        p = self.p_values
        return [i + 1 for i in range(1, len(p) - 1) if p[i] < p[i - 1] and p[i] < p[i + 1]]


def _ids(studies):
    return [st.study_id if st.study_id is not None else str(i + 1) for i, st in enumerate(studies)]


def zscores(studies: Sequence[StudyF], kind=TransformKind.T3, rho: float = 1.0) -> np.ndarray:
    """Per-study transformed statistics, naming the first study outside the transform's domain."""
    kind = TransformKind.parse(kind)
    if len(studies) == 0:
        raise ValueError("at least one study is required")
    out = np.empty(len(studies))
    for k, st in enumerate(studies):
        try:
            out[k] = transform(kind, st.s, rho, st.fdist)
        except UnsupportedTransformError as exc:
            raise UnsupportedTransformError(
                f"study {_ids(studies)[k]}: {exc}", kind=kind, study=k
            ) from None
    return out


def plotting_positions(k: int) -> np.ndarray:
    return np.asarray(normal_quantile((np.arange(1, k + 1) - 0.5) / k), dtype=float).reshape(k)


def qq_data(studies: Sequence[StudyF], kind=TransformKind.T3) -> QQData:
    kind = TransformKind.parse(kind)
    z = zscores(studies, kind)
    order = np.argsort(z, kind="stable")
    ids = _ids(studies)
    return QQData(
        theoretical=tuple(float(v) for v in plotting_positions(z.size)),
        observed=tuple(float(v) for v in z[order]),
        transform=kind,
        study_ids=tuple(ids[i] for i in order),
    )


def study_f_test(study: StudyF, alpha: float = 0.05) -> ForestRow:
    """Two-sided F-test of equal variances and the exact interval for the ratio."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    d = study.fdist
    p = min(1.0, 2.0 * min(f_cdf(study.s, d), f_sf(study.s, d)))
    low = study.s / f_quantile(1 - alpha / 2, d)
    high = study.s / f_quantile(alpha / 2, d)
    sid = study.study_id if study.study_id is not None else ""
    return ForestRow(sid, float(study.s), float(low), float(high), float(p))


def forest_rows(studies: Sequence[StudyF], alpha: float = 0.05) -> list[ForestRow]:
    ids = _ids(studies)
    rows = []
    for sid, st in zip(ids, studies):
        r = study_f_test(st, alpha)
        rows.append(ForestRow(sid, r.ratio, r.ci_low, r.ci_high, r.p_value))
    return rows


def study_weights(studies: Sequence[StudyF], rule: str = "inverse-sqrt-c1") -> np.ndarray:
    if rule == "inverse-sqrt-c1":
        nu2 = np.array([st.nu2 for st in studies], dtype=float)
        if np.any(nu2 <= 4):
            k = int(np.flatnonzero(nu2 <= 4)[0])
            raise UnsupportedTransformError(
                f"study {_ids(studies)[k]}: inverse-sqrt-c1 weights need nu2 > 4", study=k
            )
        return default_weights(studies)
    if rule == "equal":
        return np.ones(len(studies))
    raise ValueError(f"unknown weight rule {rule!r}; expected one of {WEIGHT_RULES}")


def incremental_pvalues(
    studies: Sequence[StudyF],
    kind=TransformKind.T3,
    w_rule: str = "inverse-sqrt-c1",
    m: int = DEFAULT_MC_REPLICATES,
    seed: int = 0,
    test: str = "Zw",
) -> IncrementalCurve:
    """Omnibus p-value as studies are added in order of increasing |Z_k|.

    Weights are recomputed from the included studies at every step. ``test``
    selects the two-sided weighted Z (default) or the Monte-Carlo weighted
    chi-square.
    """
    kind = TransformKind.parse(kind)
    if test not in INCREMENTAL_TESTS:
        raise ValueError(f"unknown incremental test {test!r}; expected one of {INCREMENTAL_TESTS}")
    z = zscores(studies, kind)
    ids = _ids(studies)
    # lexsort: last key is primary, so ties in |Z| fall back to study index
    order = np.lexsort((np.arange(z.size), np.abs(z)))
    points = []
    for k in range(1, z.size + 1):
        idx = order[:k]
        w = study_weights([studies[i] for i in idx], w_rule)
        if test == "Zw":
            res = z_weighted_test(z[idx], w)
        else:
            res = x2_weighted_test(z[idx], w, m, seed)
        points.append(IncrementalPoint(k, tuple(ids[i] for i in idx), res.p_value, res.statistic))
    return IncrementalCurve(tuple(points), kind, test)


__all__ = [
    "QQData", "ForestRow", "IncrementalPoint", "IncrementalCurve", "zscores", "plotting_positions",
    "qq_data", "study_f_test", "forest_rows", "study_weights", "incremental_pvalues",
]
