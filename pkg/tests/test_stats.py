import numpy as np
import pytest

from macrohydro.stats import (
    batch_mean_se,
    cluster_regression,
    effective_sample_size,
    integrated_autocorr_time,
    pooled_kurtosis_jackknife,
    rng_trace,
)


def ar1_series(rho, size, paths, seed=0):
    rng = np.random.default_rng(seed)
    x = np.zeros((size, paths))
    x[0] = rng.standard_normal(paths)
    scale = np.sqrt(1 - rho**2)
    for t in range(1, size):
        x[t] = rho * x[t - 1] + scale * rng.standard_normal(paths)
    return x


def test_iact_of_ar1_matches_theory():
    # IACT of an AR(1) chain is (1 + rho)/(1 - rho)
    for rho, tol in [(0.0, 0.15), (0.5, 0.4)]:
        series = ar1_series(rho, 4000, 8, seed=3)
        expected = (1 + rho) / (1 - rho)
        assert integrated_autocorr_time(series) == pytest.approx(expected, rel=0.15, abs=tol)


def test_effective_sample_size_shrinks_with_correlation():
    iid = ar1_series(0.0, 2000, 4, seed=5)
    sticky = ar1_series(0.8, 2000, 4, seed=5)
    assert effective_sample_size(iid) > 3 * effective_sample_size(sticky)


def test_batch_mean_se_scaling():
    rng = np.random.default_rng(7)
    values = rng.standard_normal((400, 3))
    mean, se = batch_mean_se(values)
    assert np.max(np.abs(mean)) < 4 * np.max(se)
    assert se == pytest.approx(np.full(3, 1 / np.sqrt(400)), rel=0.2)


def test_kurtosis_jackknife_gaussian_and_heavy():
    rng = np.random.default_rng(11)
    g2, se = pooled_kurtosis_jackknife(rng.standard_normal((200, 50)))
    assert abs(g2) < 4 * se
    heavy = rng.standard_t(df=5, size=(200, 50))
    g2h, seh = pooled_kurtosis_jackknife(heavy)
    assert g2h > 4 * seh  # excess kurtosis of t(5) is 6


def test_cluster_regression_recovers_coefficients():
    rng = np.random.default_rng(13)
    paths, per = 100, 20
    clusters = np.repeat(np.arange(paths), per)
    x1 = rng.standard_normal(paths * per)
    x2 = rng.standard_normal(paths * per)
    noise = np.repeat(rng.standard_normal(paths), per)  # within-cluster common noise
    y = 2.0 * x1 + 0.0 * x2 + 0.3 * noise
    beta, se = cluster_regression(y, np.column_stack([x1, x2]), clusters)
    assert beta[0] == pytest.approx(2.0, abs=4 * se[0])
    assert abs(beta[1]) < 4 * se[1]


def test_rng_trace_fields():
    trace = rng_trace(42, 5)
    assert trace["rule"] == "PCG64(SplitMix64(seed XOR path_index))"
    assert len(trace["first_path_seeds"]) == 5
    assert len(trace["path_seed_sha256"]) == 64
