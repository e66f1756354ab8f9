"""Metropolis sampling of the theta field with the t-fields integrated out.

The Boltzmann weight of a pinned configuration ``theta`` (``theta[x0] = 0``) is
``exp(-S_eff)`` with

    S_eff(theta) = (N-1)/2 ln det M_hat(theta) + beta sum_{x,mu} cosh(theta_x - theta_{x+mu}),

where ``M(theta) = -Delta + diag(m - 2d)`` and ``m_x = sum_z exp(theta_x - theta_z)``
over the 2d neighbor slots.  A single-site move at ``x`` changes only the
diagonal entries of ``M_hat`` at ``x`` and its neighbors, so the determinant
ratio is a small ``k x k`` determinant (``k <= 2d+1``) and the inverse is
refreshed by a Woodbury update.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .dual_action import ModelParams, pinned, theta_matrix
from .lattice import Lattice
from .latmat import NotPositiveDefiniteError, cholesky, delete_site, hat_indices, inverse
from .stats import binned_error, integrated_autocorr_time, inverse_variance_mean

RESYNC_EVERY = 100
RESYNC_TOL = 1e-8


class DriftError(RuntimeError):
    """Cached log-determinant drifted away from a fresh factorization."""


def _hat_M(lat: Lattice, theta: np.ndarray, x0: int) -> np.ndarray:
    return np.ascontiguousarray(delete_site(theta_matrix(lat, theta), x0))


def _logdet_and_inverse(Mh: np.ndarray) -> tuple[float, np.ndarray]:
    Lc = cholesky(Mh)
    return 2.0 * float(np.log(np.diag(Lc)).sum()), np.ascontiguousarray(inverse(Mh))


def kinetic_term(lat: Lattice, theta: np.ndarray) -> float:
    b = lat.bonds
    return float(np.cosh(theta[b[:, 0]] - theta[b[:, 1]]).sum())


def effective_action(lat: Lattice, theta, params: ModelParams) -> float:
    """``S_eff`` of a pinned configuration (additive constants dropped)."""
    theta = pinned(theta, params.x0)
    Lc = cholesky(_hat_M(lat, theta, params.x0))  # cannot fail for real theta
    logdet = 2.0 * float(np.log(np.diag(Lc)).sum())
    return 0.5 * (params.N - 1) * logdet + params.beta * kinetic_term(lat, theta)


@dataclass
class ThetaConfig:
    """A pinned configuration with the cached inverse and log-det of ``M_hat``."""

    lat: Lattice
    x0: int
    theta: np.ndarray
    G: np.ndarray
    logdet: float

    @classmethod
    def initial(cls, lat: Lattice, x0: int = 0, theta=None) -> "ThetaConfig":
        theta = np.zeros(lat.V) if theta is None else pinned(theta, x0).copy()
        logdet, G = _logdet_and_inverse(_hat_M(lat, theta, x0))
        return cls(lat, x0, np.ascontiguousarray(theta, dtype=float), G, logdet)

    def resync(self) -> float:
        """Refactorize from scratch and return the log-det drift that was removed."""
        logdet, G = _logdet_and_inverse(_hat_M(self.lat, self.theta, self.x0))
        drift = abs(logdet - self.logdet)
        self.logdet = logdet
        self.G[...] = G
        return drift

    def copy(self) -> "ThetaConfig":
        return ThetaConfig(self.lat, self.x0, self.theta.copy(), self.G.copy(), self.logdet)


def _hat_positions(V: int, x0: int) -> np.ndarray:
    pos = np.full(V, -1, dtype=np.int64)
    pos[hat_indices(V, x0)] = np.arange(V - 1)
    return pos


def _reference_sweep(config: ThetaConfig, beta: float, coef: float, width: float,
                     normals: np.ndarray, uniforms: np.ndarray) -> int:
    """Same Markov kernel as the fast path, refactorizing ``M_hat`` for each proposal."""
    lat, x0, theta = config.lat, config.x0, config.theta
    nbr = lat.neighbors
    accepted = 0
    for x in range(lat.V):
        if x == x0:
            continue
        old = theta[x]
        new = old + width * normals[x]
        theta[x] = new
        try:
            Lc = cholesky(_hat_M(lat, theta, x0))
        except NotPositiveDefiniteError:
            theta[x] = old
            continue
        logdet_new = 2.0 * float(np.log(np.diag(Lc)).sum())
        theta[x] = old
        d_kin = float(np.sum(np.cosh(new - theta[nbr[x]]) - np.cosh(old - theta[nbr[x]])))
        dS = coef * (logdet_new - config.logdet) + beta * d_kin
        if dS <= 0.0 or uniforms[x] < math.exp(-dS):
            theta[x] = new
            config.logdet = logdet_new
            accepted += 1
    config.G[...] = inverse(_hat_M(lat, theta, x0))
    return accepted


def metropolis_sweep(config: ThetaConfig, params: ModelParams, width: float,
                     rng: np.random.Generator, method: str = "fast",
                     kernel=None) -> int:
    """One sweep of Gaussian single-site proposals over ``x != x0`` in site order.

    Parameters
    ----------
    config : ThetaConfig
        Updated in place.
    params : ModelParams
    width : float
        Standard deviation of the proposal.
    rng : numpy.random.Generator
        Consumes ``V`` normals then ``V`` uniforms per sweep regardless of
        ``method``, so all methods produce the same chain.
    method : {"fast", "reference"}
        ``"fast"`` uses low-rank updates; ``"reference"`` refactorizes.
    kernel : callable, optional
        Override for the low-rank sweep (e.g. ``_kernels.python.sweep_lowrank``).

    Returns
    -------
    int
        Number of accepted proposals.
    """
    lat = config.lat
    normals = rng.standard_normal(lat.V)
    uniforms = rng.random(lat.V)
    coef = 0.5 * (params.N - 1)
    if method == "reference":
        return _reference_sweep(config, params.beta, coef, width, normals, uniforms)
    if method != "fast":
        raise ValueError(f"unknown method {method!r}")
    sweep = kernel or _kernels.sweep_lowrank
    accepted, config.logdet = sweep(
        config.theta, config.G, float(config.logdet), _neighbors_i64(lat),
        _hat_positions(lat.V, config.x0), int(config.x0), float(params.beta),
        coef, float(width), normals, uniforms,
    )
    return int(accepted)


def _neighbors_i64(lat: Lattice) -> np.ndarray:
    return np.ascontiguousarray(lat.neighbors, dtype=np.int64)


def zero_extended_inverse(config: ThetaConfig) -> np.ndarray:
    """``M_hat^-1`` as a ``V x V`` matrix with zero row and column at ``x0``."""
    V, x0 = config.lat.V, config.x0
    idx = hat_indices(V, x0)
    out = np.zeros((V, V))
    out[np.ix_(idx, idx)] = config.G
    return out


def correlator_estimator(lat: Lattice, theta, x: int, y: int, params: ModelParams) -> float:
    """Conditional expectation of ``n_x . n_y`` given ``theta``.

    With ``G = M_hat^-1`` extended by zero at ``x0`` and ``r = exp(-theta)``::

        -(N-1)/(2 beta) [2 G_xy - G_xx r_y/r_x - G_yy r_x/r_y] + (r_x/r_y + r_y/r_x)/2

    The normalization is fixed by the exact Gaussian t-integral: it returns
    1 at ``x = y`` and tends to ``-lam D`` at the large-N saddle.
    """
    config = ThetaConfig.initial(lat, params.x0, theta)
    G = zero_extended_inverse(config)
    r = np.exp(-config.theta)
    k = 0.5 * (params.N - 1) / params.beta
    q = r[y] / r[x]
    return float(-k * (2 * G[x, y] - G[x, x] * q - G[y, y] / q) + 0.5 * (q + 1 / q))


def translation_averaged(config: ThetaConfig, params: ModelParams, kernel=None) -> np.ndarray:
    """Estimator averaged over all pairs at each displacement index."""
    lat = config.lat
    out = np.zeros(lat.V)
    acc = kernel or _kernels.accumulate_correlator
    acc(config.theta, config.G, _hat_positions(lat.V, config.x0),
        np.ascontiguousarray(lat.displacement_table, dtype=np.int64),
        0.5 * (params.N - 1) / params.beta, out)
    return out / lat.V


@dataclass
class ChainResult:
    """Per-displacement ``<n_x . n_y>`` from one chain (or several merged)."""

    mean: np.ndarray
    error: np.ndarray
    tau_int: np.ndarray
    sweeps: int
    seed: int | list
    acceptance: float
    width: float
    n_bins: int = 50
    max_drift: float = 0.0
    extra: dict = field(default_factory=dict)


def tune_width(config: ThetaConfig, params: ModelParams, rng, burn_in: int,
               width: float = 0.5, window: int = 20) -> float:
    """Run ``burn_in`` sweeps, steering acceptance into [0.4, 0.6]; return the frozen width."""
    n_prop = config.lat.V - 1
    acc = 0
    for i in range(1, burn_in + 1):
        acc += metropolis_sweep(config, params, width, rng)
        if i % window == 0:
            rate = acc / (window * n_prop)
            if rate > 0.6:
                width *= 1.25
            elif rate < 0.4:
                width *= 0.8
            acc = 0
        if i % RESYNC_EVERY == 0:
            config.resync()
    return width


def run_chain(lat: Lattice, params: ModelParams, sweeps: int, burn_in: int = 1000,
              thin: int = 1, seed: int = 0, width: float | None = None,
              n_bins: int = 50) -> ChainResult:
    """Burn in (tuning the width unless given), then measure every ``thin`` sweeps.

    Parameters
    ----------
    sweeps : int
        Total sweeps including ``burn_in``.
    width : float, optional
        Fixed proposal width; when omitted it is tuned during burn-in.

    Returns
    -------
    ChainResult
        Indexed by displacement (``lat.displacement_table`` convention).
    """
    if not sweeps > burn_in >= 0:
        raise ValueError("need sweeps > burn_in >= 0")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    rng = np.random.default_rng(seed)
    config = ThetaConfig.initial(lat, params.x0)
    if width is None:
        width = tune_width(config, params, rng, burn_in)
    else:
        for i in range(1, burn_in + 1):
            metropolis_sweep(config, params, width, rng)
            if i % RESYNC_EVERY == 0:
                config.resync()
    config.resync()
    n_meas = sweeps - burn_in
    samples = []
    accepted = 0
    max_drift = 0.0
    for i in range(1, n_meas + 1):
        accepted += metropolis_sweep(config, params, width, rng)
        if i % RESYNC_EVERY == 0:
            drift = config.resync()
            max_drift = max(max_drift, drift)
            if drift > RESYNC_TOL:
                raise DriftError(f"log-det drift {drift:.3g} after sweep {i}")
        if i % thin == 0:
            samples.append(translation_averaged(config, params))
    series = np.asarray(samples)
    tau = np.array([integrated_autocorr_time(series[:, s]) for s in range(series.shape[1])])
    return ChainResult(
        mean=series.mean(axis=0),
        error=binned_error(series, n_bins),
        tau_int=tau,
        sweeps=n_meas,
        seed=seed,
        acceptance=accepted / (n_meas * (lat.V - 1)),
        width=width,
        n_bins=n_bins,
        max_drift=max_drift,
    )


def _chain_job(args):
    return run_chain(*args[:2], **args[2])


def run_chains(lat: Lattice, params: ModelParams, sweeps: int, seeds, workers: int = 1,
               **kwargs) -> ChainResult:
    """Independent chains with distinct seeds, merged by inverse-variance weighting."""
    jobs = [(lat, params, dict(sweeps=sweeps, seed=int(s), **kwargs)) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chains = list(pool.map(_chain_job, jobs))
    else:
        chains = [_chain_job(j) for j in jobs]
    mean, err = inverse_variance_mean([c.mean for c in chains], [c.error for c in chains])
    return ChainResult(
        mean=mean,
        error=err,
        tau_int=np.max([c.tau_int for c in chains], axis=0),
        sweeps=sum(c.sweeps for c in chains),
        seed=[c.seed for c in chains],
        acceptance=float(np.mean([c.acceptance for c in chains])),
        width=float(np.mean([c.width for c in chains])),
        n_bins=chains[0].n_bins,
        max_drift=max(c.max_drift for c in chains),
        extra={"chains": chains},
    )


@dataclass
class Comparison:
    measured: np.ndarray
    error: np.ndarray
    predicted: np.ndarray
    pull: np.ndarray
    rel_dev: np.ndarray
    max_pull: float = 3.0
    max_rel: float = 0.05

    @property
    def passed(self) -> bool:
        return bool(np.all(np.abs(self.pull) <= self.max_pull) and np.all(self.rel_dev <= self.max_rel))


def compare_large_n(result: ChainResult, D_row: np.ndarray, lam: float,
                    max_pull: float = 3.0, max_rel: float = 0.05) -> Comparison:
    """Pulls and relative deviations of the measurement from ``-lam D``."""
    pred = -lam * np.asarray(D_row)
    diff = result.mean - pred
    with np.errstate(divide="ignore", invalid="ignore"):
        pull = np.where(result.error > 0, diff / result.error, np.where(diff == 0, 0.0, np.inf))
    return Comparison(result.mean, result.error, pred, pull, np.abs(diff) / np.abs(pred),
                      max_pull, max_rel)
