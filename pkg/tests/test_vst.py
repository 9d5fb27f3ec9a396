import math

import numpy as np
import pytest
from scipy.stats import kstest

from oracle_values import BMD_DELTA, BMD_T3_Z
from varmeta.datasets import bmd_studies
from varmeta.special import DomainError, FDist, f_quantile, make_rng, normal_cdf, sample_f
from varmeta.vst import (
    TransformKind,
    UnsupportedTransformError,
    constants,
    inverse_cdf_transform,
    t1,
    t2,
    t3,
    t4,
    transform,
)

ALL_KINDS = list(TransformKind)


def test_parse():
    assert TransformKind.parse("t3") is TransformKind.T3
    assert TransformKind.parse("inverse-cdf") is TransformKind.INVERSE_CDF
    assert TransformKind.parse("InverseCdf") is TransformKind.INVERSE_CDF
    with pytest.raises(ValueError):
        TransformKind.parse("T9")


def test_constants():
    c = constants(FDist(10, 10))
    assert c.c1 == pytest.approx(0.6, rel=1e-15)
    assert c.c2 == pytest.approx(1 / 3, rel=1e-15)
    assert constants(FDist(3, 6)).mean_s == 1.5
    small = constants(FDist(3, 4))
    assert small.c1 is None and small.c2 is None
    assert constants(FDist(3, 2)).mean_s is None


def test_delta_against_oracle():
    for st, expected in zip(bmd_studies(), BMD_DELTA):
        assert constants(st.fdist).delta == pytest.approx(expected, rel=1e-12)


def test_t1_at_mean():
    d = FDist(12, 20)
    c = constants(d)
    assert t1(c.mean_s, d) == pytest.approx(math.sqrt(c.c1) / 2, rel=1e-14)
    assert t1(2.6, d) - t1(1.3, d) == pytest.approx(math.log(2) / math.sqrt(c.c1), rel=1e-13)


def test_t2_at_mean():
    nu1, nu2 = 12.0, 20.0
    d = FDist(nu1, nu2)
    c = constants(d)
    expected = math.sqrt(c.c2) * (2 * nu1 + nu2 - 2) / (4 * math.sqrt(nu1 ** 2 + 2 * nu1 * nu2 - 2 * nu1))
    assert t2(c.mean_s, d) == pytest.approx(expected, rel=1e-13)


def test_t3_equal_dof_at_one():
    for nu in (1, 5, 40, 300):
        assert t3(1.0, FDist(nu, nu)) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("nu", [(3, 3), (6, 68), (40, 5), (100, 100)])
def test_t4_zero_at_median_and_sign(nu):
    d = FDist(*nu)
    delta = f_quantile(0.5, d)
    assert t4(delta, d) == pytest.approx(0.0, abs=1e-12)
    s = np.geomspace(delta / 50, delta * 50, 101)
    s = s[np.abs(s / delta - 1) > 1e-9]
    z = t4(s, d)
    assert np.all((z > 0) == (s > delta))


def test_inverse_cdf_zero_at_median():
    d = FDist(6, 68)
    assert inverse_cdf_transform(f_quantile(0.5, d), d) == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("kind", [TransformKind.T1, TransformKind.T2])
def test_small_nu2_is_unsupported(kind):
    with pytest.raises(UnsupportedTransformError):
        transform(kind, 1.0, 1.0, FDist(10, 4))
    # T3 and T4 stay defined there
    assert math.isfinite(transform(TransformKind.T3, 1.0, 1.0, FDist(10, 4)))
    assert math.isfinite(transform(TransformKind.T4, 1.0, 1.0, FDist(10, 4)))


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_domain_errors(kind):
    with pytest.raises(DomainError):
        transform(kind, -1.0, 1.0, FDist(10, 10))
    with pytest.raises(DomainError):
        transform(kind, 1.0, 0.0, FDist(10, 10))


@pytest.mark.parametrize("kind", ALL_KINDS)
@pytest.mark.parametrize("nu", [(5, 5), (6, 68), (30, 7), (99, 99), (1, 20)])
def test_strictly_increasing(kind, nu):
    d = FDist(*nu)
    s = np.geomspace(2e-2, 50, 800)
    z = transform(kind, s, 1.0, d)
    assert np.all(np.diff(z) > 0)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_scale_equivariance(kind):
    d = FDist(14, 22)
    x = np.geomspace(0.1, 10, 25)
    for rho in (0.3, 1.7, 12.0):
        # rho*x/rho is x only up to rounding, so allow one ulp of the input
        assert np.allclose(transform(kind, rho * x, rho, d), transform(kind, x, 1.0, d), rtol=1e-12, atol=1e-12)


def test_vectorized_matches_scalar():
    studies = bmd_studies()
    s = np.array([st.s for st in studies])
    d = FDist(np.array([st.nu1 for st in studies]), np.array([st.nu2 for st in studies]))
    for kind in ALL_KINDS:
        vec = transform(kind, s, 1.0, d)
        for k, st in enumerate(studies):
            assert vec[k] == pytest.approx(transform(kind, st.s, 1.0, st.fdist), rel=1e-13, abs=1e-13)


def test_bmd_t3_scores():
    z = np.array([transform("T3", st.s, 1.0, st.fdist) for st in bmd_studies()])
    assert np.allclose(z, BMD_T3_Z, rtol=1e-12, atol=1e-14)
    # study 11 is the closest to the null
    assert int(np.argmin(np.abs(z))) == 10


@pytest.mark.parametrize("kind", [TransformKind.T1, TransformKind.T2, TransformKind.T3, TransformKind.T4])
def test_normality_at_30_30(kind):
    d = FDist(30, 30)
    z = transform(kind, sample_f(d, 1.0, make_rng(11), 10_000), 1.0, d)
    assert abs(z.mean()) <= 0.05
    assert 0.9 <= z.var(ddof=1) <= 1.1


def test_inverse_cdf_is_exact_normal():
    d = FDist(6, 68)
    z = inverse_cdf_transform(sample_f(d, 1.0, make_rng(3), 100_000), d)
    assert kstest(z, lambda v: normal_cdf(v)).pvalue > 0.01


def test_t3_tracks_inverse_cdf():
    rng = make_rng(8)
    worst = 1.0
    for a in (5, 10, 20, 50, 100):
        for b in (5, 10, 20, 50, 100):
            d = FDist(a, b)
            s = sample_f(d, 1.0, rng, 1000)
            worst = min(worst, np.corrcoef(t3(s, d), inverse_cdf_transform(s, d))[0, 1])
    assert worst >= 0.999


def test_t4_reflection_in_deep_lower_tail():
    d = FDist(6, 68)
    z = t4(1e-6, d)
    assert math.isfinite(z) and z < -5
