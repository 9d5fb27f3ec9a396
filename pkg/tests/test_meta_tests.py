import math

import numpy as np
import pytest

from oracle_values import BMD_T3_Z, BMD_WEIGHTS, BMD_X2_P, BMD_X2_STAT, BMD_Z_P, BMD_Z_STAT, BMD_ZW_STAT
from varmeta.estimators import default_weights
from varmeta.datasets import bmd_studies
from varmeta.meta_tests import (
    MC_BLOCK,
    MetaTestResult,
    normalize_weights,
    run_all,
    weighted_chi2_null_exceedances,
    x2_sum_test,
    x2_weighted_test,
    z_mean_test,
    z_weighted_test,
)
from varmeta.special import FDist, derive_rng, sample_f
from varmeta.vst import transform

Z = np.array(BMD_T3_Z)


def test_single_study_reductions():
    res = z_mean_test([1.5])
    assert res.statistic == 1.5
    # chi-square(1) tail equals the two-sided normal p
    assert x2_sum_test([1.5]).p_value == pytest.approx(res.p_value, rel=1e-12)


@pytest.mark.parametrize("k", [1, 4, 13])
def test_all_zero(k):
    z = np.zeros(k)
    assert z_mean_test(z).p_value == 1.0
    assert x2_sum_test(z).p_value == 1.0
    assert x2_weighted_test(z, np.ones(k), m=2000).p_value == 1.0


def test_bmd_statistics_against_oracle():
    assert z_mean_test(Z).statistic == pytest.approx(BMD_Z_STAT, rel=1e-13)
    assert z_mean_test(Z).p_value == pytest.approx(BMD_Z_P, rel=1e-10)
    assert x2_sum_test(Z).statistic == pytest.approx(BMD_X2_STAT, rel=1e-13)
    assert x2_sum_test(Z).p_value == pytest.approx(BMD_X2_P, rel=1e-10)
    w = default_weights(bmd_studies())
    assert np.allclose(w, BMD_WEIGHTS, rtol=1e-13)
    assert z_weighted_test(Z, w).statistic == pytest.approx(BMD_ZW_STAT, rel=1e-13)
    assert x2_sum_test(Z).p_value < 0.05


def test_equal_weights_reduce_to_mean_test():
    w = np.ones(Z.size)
    assert z_weighted_test(Z, w).statistic == pytest.approx(z_mean_test(Z).statistic, rel=1e-14)


def test_weighted_z_scale_free():
    w = np.array(BMD_WEIGHTS)
    assert z_weighted_test(Z, 7.3 * w).statistic == pytest.approx(z_weighted_test(Z, w).statistic, rel=1e-14)


def test_sidedness():
    res = z_mean_test([1.0, 2.0], sided="greater")
    assert res.p_value + z_mean_test([1.0, 2.0], sided="less").p_value == pytest.approx(1.0)
    assert z_mean_test([1.0, 2.0]).p_value == pytest.approx(2 * res.p_value)
    with pytest.raises(ValueError):
        z_mean_test([1.0], sided="both")


def test_equal_weight_x2w_matches_chi_square():
    rng = np.random.default_rng(0)
    z = rng.normal(size=6) * 1.1
    m = 100_000
    mc = x2_weighted_test(z, np.ones(6), m=m, seed=3).p_value
    exact = x2_sum_test(z).p_value
    assert abs(mc - exact) <= 3 * math.sqrt(exact * (1 - exact) / m)


def test_x2w_reproducible_and_stable():
    w = np.array(BMD_WEIGHTS)
    a = x2_weighted_test(Z * 0.6, w, m=100_000, seed=5)
    b = x2_weighted_test(Z * 0.6, w, m=100_000, seed=5)
    assert a == b
    c = x2_weighted_test(Z * 0.6, w, m=100_000, seed=6)
    assert abs(a.p_value - c.p_value) <= 0.005
    assert a.mc_replicates == 100_000


def test_x2w_partition_independent():
    w = np.array(BMD_WEIGHTS)
    m = 4 * MC_BLOCK + 123
    stat = 0.8
    whole = weighted_chi2_null_exceedances(w, stat, m, 9)
    parts = sum(weighted_chi2_null_exceedances(w, stat, m, 9, blocks=[b]) for b in range(5))
    assert whole == parts


def test_x2w_validation():
    with pytest.raises(ValueError):
        x2_weighted_test(Z, np.ones(Z.size), m=999)
    with pytest.raises(ValueError):
        x2_weighted_test(Z, np.ones(3))
    with pytest.raises(ValueError):
        z_weighted_test(Z, np.r_[np.ones(12), 0.0])
    with pytest.raises(ValueError):
        z_mean_test([])


def test_normalize_weights():
    w = normalize_weights([2.0, 2.0, 4.0])
    assert np.allclose(w, [0.25, 0.25, 0.5])
    assert math.fsum(w) == pytest.approx(1.0, abs=1e-15)


def test_result_invariants():
    with pytest.raises(ValueError):
        MetaTestResult(1.0, 1.2, "Z")
    with pytest.raises(ValueError):
        MetaTestResult(1.0, 0.5, "X2w", mc_replicates=0)
    with pytest.raises(ValueError):
        MetaTestResult(1.0, 0.5, "Z", mc_replicates=10)


def test_order_invariance():
    w = np.array(BMD_WEIGHTS)
    base = run_all(Z, w, m=20_000, seed=1)
    perm = np.random.default_rng(4).permutation(Z.size)
    shuffled = run_all(Z[perm], w[perm], m=20_000, seed=1)
    for key in base:
        assert shuffled[key].p_value == pytest.approx(base[key].p_value, rel=1e-12, abs=1e-15)
    # X2w is exactly order invariant, not just approximately
    assert shuffled["X2w"].p_value == base["X2w"].p_value


def test_null_rejection_rates_bmd_design():
    studies = bmd_studies()
    d = FDist(np.array([s.nu1 for s in studies]), np.array([s.nu2 for s in studies]))
    w = default_weights(studies)
    reps = 10_000
    hits = {"Z": 0, "X2": 0, "Zw": 0}
    for r in range(reps):
        s = sample_f(d, 1.0, derive_rng(17, r))
        z = transform("T3", s, 1.0, d)
        hits["Z"] += z_mean_test(z).p_value < 0.05
        hits["X2"] += x2_sum_test(z).p_value < 0.05
        hits["Zw"] += z_weighted_test(z, w).p_value < 0.05
    for key, count in hits.items():
        assert 0.04 <= count / reps <= 0.06, key
