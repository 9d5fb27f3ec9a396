import math

import numpy as np
import pytest
from scipy.special import gammaln
from scipy.stats import kstest

from varmeta.simulation import (
    BMD_ARM_SIZES,
    SimDesign,
    SimRow,
    bmd_design,
    cohens_d_table,
    draw_study_ratio,
    estimator_table,
    rejection_rate,
    size_grid,
    transform_samples,
)
from varmeta.special import DomainError, FDist, derive_rng, f_cdf, f_quantile


def test_design_validation():
    with pytest.raises(ValueError, match="100"):
        SimDesign(BMD_ARM_SIZES, replicates=99)
    with pytest.raises(ValueError):
        SimDesign(())
    with pytest.raises(ValueError):
        SimDesign(((1, 5),))
    with pytest.raises(ValueError):
        SimDesign(BMD_ARM_SIZES, rho=0.0)
    with pytest.raises(ValueError):
        SimDesign(BMD_ARM_SIZES, tau=-0.1)
    assert bmd_design(copies=2).k == 26
    assert bmd_design(scale=3).arm_sizes[0] == (21, 207)


def test_draw_tau_zero_is_scaled_f():
    d = FDist(9.0, 14.0)
    rng = derive_rng(2, 0)
    draws = np.array([draw_study_ratio(d, 1.7, 0.0, rng) for _ in range(5000)])
    assert kstest(draws / 1.7, lambda x: f_cdf(x, d)).pvalue > 0.01


def test_draw_heterogeneity_inflates_log_variance():
    d = FDist(np.full(40_000, 60.0), np.full(40_000, 60.0))
    base = np.log(draw_study_ratio(d, 1.0, 0.0, derive_rng(5, 0)))
    wide = np.log(draw_study_ratio(d, 1.0, 0.5, derive_rng(5, 1)))
    assert wide.var() - base.var() == pytest.approx(0.25, abs=0.02)


def test_draw_median_tracks_rho():
    d = FDist(np.full(20_000, 20.0), np.full(20_000, 30.0))
    s = draw_study_ratio(d, 2.0, 0.0, derive_rng(6, 0))
    assert np.median(s) == pytest.approx(2.0 * f_quantile(0.5, FDist(20, 30)), rel=0.02)


def test_draw_validation():
    with pytest.raises(DomainError):
        draw_study_ratio(FDist(5, 5), 1.0, -1.0, derive_rng(0))


def test_size_grid_structure():
    grid = size_grid("T1", [4, 16], replicates=500, seed=1)
    assert math.isnan(grid.cell(4.0, 4.0)) and math.isnan(grid.cell(16.0, 4.0))
    assert 0 <= grid.cell(16.0, 16.0) <= 1
    assert np.all(size_grid("T3", [8], alpha=1.0, replicates=200).sizes == 1.0)


def test_size_grid_reproducible():
    a = size_grid("T4", [5, 20], replicates=400, seed=3)
    b = size_grid("T4", [5, 20], replicates=400, seed=3)
    assert np.array_equal(a.sizes, b.sizes)
    # cells draw from their own streams, so a sub-grid reproduces its cell
    c = size_grid("T4", [5], replicates=400, seed=3)
    assert c.sizes[0, 0] == a.sizes[0, 0]


def test_t3_size_near_nominal():
    size = size_grid("T3", [50], replicates=20_000, seed=0).cell(50.0, 50.0)
    assert abs(size - 0.05) <= 3 * math.sqrt(0.05 * 0.95 / 20_000)


def test_transform_samples_moments():
    z = transform_samples("T4", FDist(30, 40), n=20_000, seed=2)
    assert z.shape == (20_000,)
    assert abs(z.mean()) <= 0.04 and abs(z.var() - 1) <= 0.05
    assert np.array_equal(z, transform_samples("T4", FDist(30, 40), n=20_000, seed=2))


def test_estimator_table_basic():
    rows = estimator_table(bmd_design(replicates=100, seed=7))
    assert [r.method for r in rows] == ["T1", "T3", "FE", "RE"]
    for r in rows:
        assert r.replicates + r.failures == 100
        assert r.width > 0 and abs(r.bias) < 0.2
    assert rows[-1].bias_tau is not None and rows[0].bias_tau is None


def test_estimator_table_reproducible_and_parallel():
    design = bmd_design(rho=1.3, tau=0.2, replicates=120, seed=11)
    serial = estimator_table(design, methods=("T1", "RE"))
    assert serial == estimator_table(design, methods=("T1", "RE"))
    assert serial == estimator_table(design, methods=("T1", "RE"), workers=2)


def test_estimator_table_rejects_unknown_method():
    with pytest.raises(ValueError):
        estimator_table(bmd_design(replicates=100), methods=("T9",))


def test_simrow_invariants():
    with pytest.raises(ValueError):
        SimRow("T1", 0.0, 1.2, 0.1)
    with pytest.raises(ValueError):
        SimRow("T1", 0.0, 0.9, 0.1, bias_tau=0.0)


def test_rejection_rate_increases_with_rho():
    rates = [rejection_rate(bmd_design(rho=rho, replicates=400, seed=9)) for rho in (1.0, 1.2, 1.5)]
    assert rates[0] < rates[1] < rates[2]
    assert rates[0] <= 0.1


def test_cohens_d_equal_means():
    (row,) = cohens_d_table([60], mu=(1.0, 1.0), replicates=4000, seed=1)
    assert abs(row.mean_d) <= 4 * row.sd_d / math.sqrt(4000)


def test_cohens_d_equal_sd_matches_noncentral_t_mean():
    n1, n2, delta = 30, 170, 0.5
    (row,) = cohens_d_table([n1], mu=(0.5, 0.0), sd=(1.0, 1.0), replicates=20_000, seed=4)
    nu = n1 + n2 - 2
    exact = delta * math.sqrt(nu / 2) * math.exp(gammaln((nu - 1) / 2) - gammaln(nu / 2))
    assert abs(row.mean_d - exact) <= 4 * row.sd_d / math.sqrt(20_000)
    assert (row.n1, row.n2) == (n1, n2)


def test_cohens_d_validation():
    with pytest.raises(ValueError):
        cohens_d_table([199])
