"""Error analysis for correlated Monte Carlo time series."""
from __future__ import annotations

import numpy as np


def bin_means(series: np.ndarray, n_bins: int) -> np.ndarray:
    """Means of ``n_bins`` equal consecutive blocks along axis 0 (tail dropped)."""
    series = np.asarray(series, dtype=float)
    size = series.shape[0] // n_bins
    if size < 1:
        raise ValueError(f"{series.shape[0]} samples cannot fill {n_bins} bins")
    trimmed = series[: size * n_bins]
    return trimmed.reshape((n_bins, size) + series.shape[1:]).mean(axis=1)


def binned_error(series: np.ndarray, n_bins: int = 50) -> np.ndarray:
    """Standard error of the mean from the scatter of ``n_bins`` block means."""
    if n_bins < 20:
        raise ValueError("use at least 20 bins")
    means = bin_means(series, n_bins)
    return means.std(axis=0, ddof=1) / np.sqrt(n_bins)


def autocorrelation(x: np.ndarray) -> np.ndarray:
    """Normalised autocorrelation function of a 1-d series (FFT based)."""
    x = np.asarray(x, dtype=float) - np.mean(x)
    n = x.size
    f = np.fft.rfft(x, n=2 * n)
    acf = np.fft.irfft(f * np.conjugate(f))[:n]
    if acf[0] == 0:
        return np.zeros(n)
    return acf / acf[0]


def integrated_autocorr_time(x: np.ndarray, c: float = 6.0) -> float:
    """``tau_int = 1/2 + sum_t rho(t)`` with Sokal's self-consistent window ``M >= c tau``."""
    rho = autocorrelation(x)
    if not np.any(rho):
        return 0.5
    tau = 0.5 + np.cumsum(rho[1:])
    for m in range(1, tau.size):
        if m >= c * tau[m - 1]:
            return float(tau[m - 1])
    return float(tau[-1])


def inverse_variance_mean(means, errors) -> tuple[np.ndarray, np.ndarray]:
    """Combine independent estimates; zero-error entries are averaged plainly."""
    means = np.asarray(means, dtype=float)
    errors = np.asarray(errors, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = 1.0 / errors**2
        exact = ~np.isfinite(w).all(axis=0)
        w = np.where(np.isfinite(w), w, 0.0)
        total = w.sum(axis=0)
        mean = np.where(exact, means.mean(axis=0), (w * means).sum(axis=0) / np.where(total > 0, total, 1))
        err = np.where(exact, 0.0, 1.0 / np.sqrt(np.where(total > 0, total, np.inf)))
    return mean, err
