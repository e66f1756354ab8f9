import numpy as np
import pytest

from hypsigma.stats import (
    autocorrelation,
    bin_means,
    binned_error,
    integrated_autocorr_time,
    inverse_variance_mean,
)


def _ar1(rho, n, seed):
    rng = np.random.default_rng(seed)
    x = np.empty(n)
    x[0] = rng.standard_normal()
    noise = rng.standard_normal(n) * np.sqrt(1 - rho**2)
    for i in range(1, n):
        x[i] = rho * x[i - 1] + noise[i]
    return x


def test_bin_means_shape():
    assert np.array_equal(bin_means(np.arange(10.0), 5), [0.5, 2.5, 4.5, 6.5, 8.5])
    with pytest.raises(ValueError):
        bin_means(np.arange(3.0), 5)


def test_binned_error_white_noise():
    x = np.random.default_rng(0).standard_normal(100_000)
    assert binned_error(x, 50) == pytest.approx(1 / np.sqrt(x.size), rel=0.25)
    with pytest.raises(ValueError):
        binned_error(x, 10)


def test_binned_error_multicolumn():
    x = np.random.default_rng(1).standard_normal((5000, 3))
    assert binned_error(x).shape == (3,)


def test_autocorrelation_normalised():
    rho = autocorrelation(_ar1(0.5, 20_000, 2))
    assert rho[0] == 1.0
    assert rho[1] == pytest.approx(0.5, abs=0.03)
    assert np.array_equal(autocorrelation(np.ones(10)), np.zeros(10))


def test_tau_int_ar1():
    rho = 0.8
    tau = integrated_autocorr_time(_ar1(rho, 200_000, 3))
    assert tau == pytest.approx(0.5 * (1 + rho) / (1 - rho), rel=0.1)
    assert integrated_autocorr_time(np.ones(100)) == 0.5


def test_binned_error_accounts_for_autocorrelation():
    x = _ar1(0.8, 200_000, 4)
    naive = x.std() / np.sqrt(x.size)
    assert binned_error(x) / naive == pytest.approx(np.sqrt(2 * 4.5), rel=0.3)


def test_inverse_variance_mean():
    mean, err = inverse_variance_mean([[1.0, 2.0], [3.0, 2.0]], [[1.0, 0.0], [1.0, 0.0]])
    assert mean[0] == 2.0 and err[0] == pytest.approx(1 / np.sqrt(2))
    assert mean[1] == 2.0 and err[1] == 0.0
    mean, _ = inverse_variance_mean([1.0, 4.0], [1.0, 2.0])
    assert mean == pytest.approx((1 + 4 / 4) / (1 + 1 / 4))
