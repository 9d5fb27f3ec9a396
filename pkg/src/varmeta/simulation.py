"""Seeded simulation studies: empirical sizes, null transform samples, estimator
operating characteristics and the Cohen's d sensitivity table.

Every replicate (or grid cell) draws from its own generator derived from the
master seed and its index, so results do not depend on execution order and
``workers > 1`` reproduces the serial output bit for bit.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .estimators import (
    EstimationError,
    StudyF,
    f_density_fe_mle,
    normal_re_mle,
    vst_pivot_estimate,
    vst_root_estimate,
)
from .meta_tests import x2_sum_test
from .special import DomainError, FDist, derive_rng, normal_quantile, sample_f
from .vst import TransformKind, UnsupportedTransformError, transform

METHODS = ("T1", "T3", "FE", "RE")

# (BB, Bb+bb) arm sizes of the bone mineral density example
BMD_ARM_SIZES = (
    (7, 69), (2, 21), (15, 76), (12, 37), (38, 230), (77, 472), (8, 95),
    (107, 481), (71, 339), (46, 154), (27, 134), (25, 55), (19, 83),
)


@dataclass(frozen=True)
class SimDesign:
    arm_sizes: tuple
    rho: float = 1.0
    tau: float = 0.0
    replicates: int = 1000
    alpha: float = 0.05
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "arm_sizes", tuple((int(a), int(b)) for a, b in self.arm_sizes))
        if not self.arm_sizes:
            raise ValueError("design needs at least one study")
        if any(a < 2 or b < 2 for a, b in self.arm_sizes):
            raise ValueError("arm sizes must be at least 2")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if not self.tau >= 0:
            raise ValueError("tau must be nonnegative")
        if self.replicates < 100:
            raise ValueError("at least 100 replicates are required")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")

    @property
    def k(self) -> int:
        return len(self.arm_sizes)

    def fdist(self) -> FDist:
        sizes = np.array(self.arm_sizes, dtype=float)
        return FDist(sizes[:, 0] - 1, sizes[:, 1] - 1)


def bmd_design(rho=1.0, tau=0.0, replicates=1000, alpha=0.05, seed=0, copies=1, scale=1) -> SimDesign:
    """The example's arm sizes, optionally repeated (``copies``) or multiplied (``scale``)."""
    sizes = tuple((a * scale, b * scale) for a, b in BMD_ARM_SIZES) * copies
    return SimDesign(sizes, rho, tau, replicates, alpha, seed)


@dataclass(frozen=True)
class SimRow:
    method: str
    bias: float
    coverage: float
    width: float
    bias_tau: Optional[float] = None
    replicates: int = 0
    failures: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not 0.0 <= self.coverage <= 1.0:
            raise ValueError("coverage outside [0, 1]")
        if (self.bias_tau is not None) != (self.method == "RE"):
            raise ValueError("bias_tau is reported for RE only")


def draw_study_ratio(d: FDist, rho, tau: float, rng: np.random.Generator):
    """s = rho_k * F draw with ln rho_k ~ N(ln rho, tau^2); vectorized over array ``d``."""
    if tau < 0:
        raise DomainError("tau must be nonnegative")
    shape = np.broadcast(np.asarray(d.nu1), np.asarray(d.nu2)).shape
    size = shape if shape else None
    # the normal is always drawn so tau = 0 and tau > 0 consume the stream alike
    effect = rng.standard_normal(size)
    rho_k = np.exp(np.log(rho) + tau * effect)
    return sample_f(d, rho_k, rng, size)


def _cell_sizes(kind, nu1, nu2, alpha, replicates, seed, index):
    d = FDist(nu1, nu2)
    rng = derive_rng(seed, *index)
    s = sample_f(d, 1.0, rng, replicates)
    z = np.asarray(transform(kind, s, 1.0, d))
    crit = float(normal_quantile(1 - alpha / 2))
    return float(np.count_nonzero(z * z > crit * crit)) / replicates


@dataclass(frozen=True)
class SizeGrid:
    kind: TransformKind
    nu1: tuple
    nu2: tuple
    sizes: np.ndarray = field(compare=False)
    alpha: float = 0.05
    replicates: int = 10_000

    def cell(self, nu1, nu2) -> float:
        return float(self.sizes[self.nu1.index(nu1), self.nu2.index(nu2)])


def size_grid(kind, nu_grid: Sequence, alpha: float = 0.05, replicates: int = 10_000, seed: int = 0,
              nu2_grid: Optional[Sequence] = None) -> SizeGrid:
    """Empirical two-sided size of the single-study Z test at each (nu1, nu2).

    Rows index nu1 and columns nu2. Cells outside the transform's domain are NaN.
    """
    kind = TransformKind.parse(kind)
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    if replicates < 1:
        raise ValueError("replicates must be positive")
    rows = tuple(float(v) for v in nu_grid)
    cols = rows if nu2_grid is None else tuple(float(v) for v in nu2_grid)
    sizes = np.full((len(rows), len(cols)), np.nan)
    for i, a in enumerate(rows):
        for j, b in enumerate(cols):
            if kind.needs_nu2_above_4 and b <= 4:
                continue
            sizes[i, j] = _cell_sizes(kind, a, b, alpha, replicates, seed, (i, j))
    return SizeGrid(kind, rows, cols, sizes, alpha, replicates)


def transform_samples(kind, d: FDist, n: int = 10_000, seed: int = 0) -> np.ndarray:
    """``n`` transformed null draws for histograms and normality checks."""
    kind = TransformKind.parse(kind)
    rng = derive_rng(seed, 0)
    s = sample_f(d, 1.0, rng, n)
    return np.asarray(transform(kind, s, 1.0, d), dtype=float)


def _run_method(method, studies, alpha):
    if method == "T1":
        return vst_pivot_estimate(studies, alpha=alpha)
    if method == "T3":
        return vst_root_estimate(studies, kind=TransformKind.T3, alpha=alpha)
    if method == "FE":
        return f_density_fe_mle(studies, alpha=alpha)
    if method == "RE":
        return normal_re_mle(studies, alpha=alpha)
    raise ValueError(f"unknown method {method!r}")


_FAILURES = (EstimationError, DomainError, FloatingPointError, ArithmeticError, RuntimeError)


def _replicate(design: SimDesign, methods, r: int):
    """One replicate: per-method (estimate error, covered, width, tau error), or None on failure."""
    rng = derive_rng(design.seed, r)
    s = draw_study_ratio(design.fdist(), design.rho, design.tau, rng)
    studies = [StudyF(float(v), a, b) for v, (a, b) in zip(np.atleast_1d(s), design.arm_sizes)]
    out = []
    for method in methods:
        try:
            est = _run_method(method, studies, design.alpha)
        except (_FAILURES + (UnsupportedTransformError, ValueError)):
            return None
        tau_err = math.sqrt(est.tau2_hat) - design.tau if method == "RE" else None
        out.append((est.rho_hat - design.rho, est.covers(design.rho), est.width, tau_err))
    return out


def _chunk(args):
    design, methods, lo, hi = args
    return [_replicate(design, methods, r) for r in range(lo, hi)]


def _collect(design, methods, workers):
    n = design.replicates
    if workers <= 1:
        return _chunk((design, methods, 0, n))
    step = -(-n // (4 * workers))
    tasks = [(design, methods, lo, min(n, lo + step)) for lo in range(0, n, step)]
    results = []
    with ProcessPoolExecutor(max_workers=workers) as ex:
        for part in ex.map(_chunk, tasks):
            results.extend(part)
    return results


def estimator_table(design: SimDesign, methods: Sequence[str] = METHODS, workers: int = 1) -> list[SimRow]:
    """Bias, coverage and mean interval width per method over the design's replicates.

    A replicate in which any method fails is dropped for all methods; the
    number dropped is reported in every row.
    """
    methods = tuple(methods)
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; expected a subset of {METHODS}")
    results = _collect(design, methods, workers)
    ok = [r for r in results if r is not None]
    failures = len(results) - len(ok)
    if not ok:
        raise EstimationError("every replicate failed")
    rows = []
    for j, method in enumerate(methods):
        vals = [r[j] for r in ok]
        n = len(vals)
        bias_tau = math.fsum(v[3] for v in vals) / n if method == "RE" else None
        rows.append(SimRow(
            method=method,
            bias=math.fsum(v[0] for v in vals) / n,
            coverage=sum(1 for v in vals if v[1]) / n,
            width=math.fsum(v[2] for v in vals) / n,
            bias_tau=bias_tau,
            replicates=n,
            failures=failures,
        ))
    return rows


def rejection_rate(design: SimDesign, kind=TransformKind.T3) -> float:
    """Fraction of replicates in which the unweighted chi-square test rejects at ``design.alpha``."""
    kind = TransformKind.parse(kind)
    d = design.fdist()
    hits = 0
    for r in range(design.replicates):
        s = draw_study_ratio(d, design.rho, design.tau, derive_rng(design.seed, r))
        z = np.asarray(transform(kind, s, 1.0, d))
        hits += x2_sum_test(z).p_value < design.alpha
    return hits / design.replicates


@dataclass(frozen=True)
class CohensDRow:
    n1: int
    n2: int
    mean_d: float
    sd_d: float


def cohens_d_table(n1_values: Sequence[int], total_n: int = 200, mu=(1.1, 1.0), sd=(0.12, 0.2),
                   replicates: int = 10_000, seed: int = 0) -> list[CohensDRow]:
    """Monte-Carlo mean and SD of Cohen's d with arm 2 of size ``total_n - n1``."""
    rows = []
    for i, n1 in enumerate(n1_values):
        n1 = int(n1)
        n2 = total_n - n1
        if n1 < 2 or n2 < 2:
            raise ValueError(f"arm sizes ({n1}, {n2}) must both be at least 2")
        rng = derive_rng(seed, i)
        x1 = rng.normal(mu[0], sd[0], size=(replicates, n1))
        x2 = rng.normal(mu[1], sd[1], size=(replicates, n2))
        pooled = ((n1 - 1) * x1.var(axis=1, ddof=1) + (n2 - 1) * x2.var(axis=1, ddof=1)) / (n1 + n2 - 2)
        d = (x1.mean(axis=1) - x2.mean(axis=1)) / np.sqrt(pooled)
        rows.append(CohensDRow(n1, n2, float(d.mean()), float(d.std(ddof=1))))
    return rows


__all__ = [
    "METHODS", "BMD_ARM_SIZES", "SimDesign", "SimRow", "SizeGrid", "CohensDRow", "bmd_design",
    "draw_study_ratio", "size_grid", "transform_samples", "estimator_table", "rejection_rate",
    "cohens_d_table",
]
