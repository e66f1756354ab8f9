"""The dual action over one real variable per site and its change of variables.

Conventions
-----------
Site fields are length-``V`` arrays.  For an ``a``-field the entry at the
frozen site ``x0`` is ignored on input: it is a dependent quantity fixed by
``det A = 0``, i.e. ``a_x0 = -1 / (A_tilde^-1)_{x0 x0}``.  ``theta``-fields
must carry ``theta[x0] == 0``.  The source ``H`` is a symmetric ``V x V``
array with zero diagonal and nonpositive entries; ``None`` means ``H = 0``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .latmat import (
    HattedMatrix,
    NotPositiveDefiniteError,
    cholesky,
    delete_site,
    hat_indices,
    inverse,
    is_positive_definite,
    logdet,
)
from .lattice import Lattice, laplacian


class DomainError(ValueError):
    """The ``a``-field lies outside the domain where ``A_hat`` is positive definite."""


@dataclass(frozen=True)
class ModelParams:
    """Target dimension ``N``, coupling ``lam = (N+1)/beta`` and frozen site."""

    N: int
    lam: float
    x0: int = 0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"N must be an integer >= 2, got {self.N!r}")
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam!r}")

    @classmethod
    def from_beta(cls, N: int, beta: float, x0: int = 0) -> "ModelParams":
        if not beta > 0:
            raise ValueError(f"beta must be positive, got {beta!r}")
        return cls(N=N, lam=(N + 1) / beta, x0=x0)

    @property
    def beta(self) -> float:
        return (self.N + 1) / self.lam


def validate_source(H, V: int) -> np.ndarray:
    if H is None:
        return np.zeros((V, V))
    H = np.asarray(H, dtype=float)
    if H.shape != (V, V):
        raise ValueError(f"source must be {V}x{V}, got {H.shape}")
    if not np.array_equal(H, H.T):
        raise ValueError("source must be symmetric")
    if np.any(np.diag(H) != 0):
        raise ValueError("source must vanish on the diagonal")
    if np.any(H > 0):
        raise ValueError("source entries must be <= 0")
    return H


def _check_theta(theta, lat: Lattice, x0: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (lat.V,):
        raise ValueError(f"theta must have shape ({lat.V},), got {theta.shape}")
    if theta[x0] != 0.0:
        raise ValueError(f"theta must be pinned to 0 at x0={x0}")
    return theta


def _check_a(a, lat: Lattice) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape != (lat.V,):
        raise ValueError(f"a-field must have shape ({lat.V},), got {a.shape}")
    return a


def site_sums(lat: Lattice, theta: np.ndarray) -> np.ndarray:
    """``m_x = sum over neighbor slots y of exp(theta_x - theta_y)``."""
    return np.exp(theta[:, None] - theta[lat.neighbors]).sum(axis=1)


def theta_matrix(lat: Lattice, theta, H=None, beta: float = 1.0) -> np.ndarray:
    """The full matrix ``calA(theta)`` whose null vector is ``exp(-theta)``.

    ``calA = M + H/beta - diag_x(sum_z exp(theta_x - theta_z) H_xz) / beta`` with
    ``M = -Delta + diag(m_x - 2d)``.
    """
    theta = np.asarray(theta, dtype=float)
    H = validate_source(H, lat.V)
    out = laplacian(lat)
    out[np.diag_indices(lat.V)] += site_sums(lat, theta) - 2 * lat.d
    if np.any(H):
        weights = np.exp(theta[:, None] - theta[None, :]) * H
        out += H / beta
        out[np.diag_indices(lat.V)] -= weights.sum(axis=1) / beta
    return out


@dataclass(frozen=True)
class DualMatrices:
    full: np.ndarray
    hat: HattedMatrix
    tilde: np.ndarray
    a_x0: float


def _tilde(lat: Lattice, a: np.ndarray, H: np.ndarray, params: ModelParams) -> np.ndarray:
    out = laplacian(lat) + H / params.beta
    diag = a.copy()
    diag[params.x0] = 0.0
    out[np.diag_indices(lat.V)] += diag
    return out


def constrained_a_x0(tilde: np.ndarray, x0: int) -> float:
    """``-1 / (A_tilde^-1)_{x0 x0}`` via the Schur complement over ``A_hat``.

    Equal to ``b^T A_hat^-1 b - A_tilde_{x0 x0}`` with ``b`` the ``x0`` column
    off the diagonal; finite whenever ``A_hat`` is invertible.
    """
    hat = delete_site(tilde, x0)
    b = np.delete(tilde[:, x0], x0)
    return float(b @ np.linalg.solve(hat, b) - tilde[x0, x0])


def build_A(lat: Lattice, a, H, params: ModelParams, a_x0: float | None = None) -> DualMatrices:
    """``A = -Delta + H/beta + diag(a)`` with its hatted and tilde variants.

    If ``a_x0`` is not given it is fixed by the constraint ``det A = 0``.
    """
    a = _check_a(a, lat)
    H = validate_source(H, lat.V)
    tilde = _tilde(lat, a, H, params)
    if a_x0 is None:
        a_x0 = constrained_a_x0(tilde, params.x0)
    full = tilde.copy()
    full[params.x0, params.x0] += a_x0
    return DualMatrices(full=full, hat=delete_site(tilde, params.x0), tilde=tilde, a_x0=float(a_x0))


def in_domain(lat: Lattice, a, H, params: ModelParams) -> bool:
    a = _check_a(a, lat)
    H = validate_source(H, lat.V)
    return is_positive_definite(delete_site(_tilde(lat, a, H, params), params.x0))


def r_field(lat: Lattice, a, H, params: ModelParams) -> np.ndarray:
    """Inversion formula ``r_x = (A_tilde^-1)_{x x0} / (A_tilde^-1)_{x0 x0}``."""
    a = _check_a(a, lat)
    H = validate_source(H, lat.V)
    tinv = inverse(_tilde(lat, a, H, params))
    r = tinv[:, params.x0] / tinv[params.x0, params.x0]
    r[params.x0] = 1.0
    return r


def r_field_solve(lat: Lattice, a, H, params: ModelParams) -> np.ndarray:
    """Same as :func:`r_field` from ``sum_{y != x0} A_hat_xy r_y = -A_{x x0}``."""
    a = _check_a(a, lat)
    H = validate_source(H, lat.V)
    tilde = _tilde(lat, a, H, params)
    x0 = params.x0
    rhs = -np.delete(tilde[:, x0], x0)
    r = np.ones(lat.V)
    r[hat_indices(lat.V, x0)] = np.linalg.solve(delete_site(tilde, x0), rhs)
    return r


def chi(lat: Lattice, theta, H, params: ModelParams) -> np.ndarray:
    """Map a pinned ``theta``-field to ``a_x = [(Delta - H/beta) r]_x / r_x``, ``r = e^-theta``.

    The returned array includes the entry at ``x0``; it coincides with the
    constrained value ``-1/(A_tilde^-1)_{x0x0}``.
    """
    theta = _check_theta(theta, lat, params.x0)
    H = validate_source(H, lat.V)
    r = np.exp(-theta)
    return -((laplacian(lat) + H / params.beta) @ r) / r


def theta_of_a(lat: Lattice, a, params: ModelParams) -> np.ndarray:
    """Inverse of :func:`chi` at ``H = 0``: ``theta = -ln r(a)``."""
    r = r_field_solve(lat, a, None, params)
    if np.any(r <= 0):
        raise DomainError("a-field outside the domain (nonpositive r)")
    theta = -np.log(r)
    theta[params.x0] = 0.0
    return theta


def dual_action_value(lat: Lattice, a, H, params: ModelParams) -> float:
    """``S = 1/2 ln det A_hat + (1/2 lam) sum_{x != x0} a_x - (1/2 lam) (A_tilde^-1)_{x0x0}^-1``."""
    a = _check_a(a, lat)
    H = validate_source(H, lat.V)
    x0 = params.x0
    tilde = _tilde(lat, a, H, params)
    hat = delete_site(tilde, x0)
    try:
        low = cholesky(hat)
    except NotPositiveDefiniteError:
        raise DomainError("a-field outside the domain: A_hat is not positive definite") from None
    b = np.delete(tilde[:, x0], x0)
    y = np.linalg.solve(low, b)
    schur = tilde[x0, x0] - y @ y  # = 1/(A_tilde^-1)_{x0x0}
    ld = 2.0 * np.sum(np.log(np.diag(low)))
    sum_a = np.sum(a) - a[x0]
    return float(0.5 * ld + (sum_a - schur) / (2.0 * params.lam))


def grad_dual_action(lat: Lattice, a, params: ModelParams) -> np.ndarray:
    """Gradient of ``S[a, 0]``; component ``x0`` is zero (not a variable).

    ``dS/da_x = (A_hat^-1)_xx / 2 + (1 - r_x^2) / (2 lam)``.
    """
    a = _check_a(a, lat)
    H = np.zeros((lat.V, lat.V))
    hat = delete_site(_tilde(lat, a, H, params), params.x0)
    if not is_positive_definite(hat):
        raise DomainError("a-field outside the domain: A_hat is not positive definite")
    ginv = inverse(hat)
    r = r_field_solve(lat, a, None, params)
    idx = hat_indices(lat.V, params.x0)
    out = np.zeros(lat.V)
    out[idx] = 0.5 * np.diag(ginv) + (1.0 - r[idx] ** 2) / (2.0 * params.lam)
    return out


def hess_dual_action(lat: Lattice, a, params: ModelParams) -> np.ndarray:
    """Hessian of ``S[a, 0]`` over the sites ``x != x0``.

    ``d2S/da_x da_y = -G_xy^2 / 2 + r_x r_y G_xy / lam`` with ``G = A_hat^-1``.
    """
    a = _check_a(a, lat)
    hat = delete_site(_tilde(lat, a, np.zeros((lat.V, lat.V)), params), params.x0)
    g = inverse(hat)
    r = np.delete(r_field_solve(lat, a, None, params), params.x0)
    return -0.5 * g**2 + np.outer(r, r) * g / params.lam


def convex_F(lat: Lattice, theta, params: ModelParams) -> float:
    """``F(theta) = ln det M_hat(theta) + (1/lam) sum_x e^theta_x (Delta e^-theta)_x``.

    Equal to ``2 S[chi(theta), 0]``.
    """
    theta = _check_theta(theta, lat, params.x0)
    m = site_sums(lat, theta)
    mhat = delete_site(theta_matrix(lat, theta), params.x0)
    return logdet(mhat) + float(np.sum(m - 2 * lat.d)) / params.lam


def convex_F_grad(lat: Lattice, theta, params: ModelParams) -> np.ndarray:
    """Gradient of :func:`convex_F`; the pinned component is zero."""
    theta = _check_theta(theta, lat, params.x0)
    x0 = params.x0
    mhat = delete_site(theta_matrix(lat, theta), x0)
    c = np.full(lat.V, 1.0 / params.lam)
    c[hat_indices(lat.V, x0)] += np.diag(inverse(mhat))
    nb = lat.neighbors
    up = np.exp(theta[:, None] - theta[nb])
    grad = (c[:, None] * up - c[nb] / up).sum(axis=1)
    grad[x0] = 0.0
    return grad


def convex_F_hessian(lat: Lattice, theta, params: ModelParams, h: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian of :func:`convex_F_grad` over the free sites.

    Returns the symmetrized ``(V-1) x (V-1)`` matrix (rows ordered as ``hat_indices``).
    """
    theta = _check_theta(theta, lat, params.x0)
    idx = hat_indices(lat.V, params.x0)
    out = np.empty((idx.size, idx.size))
    for k, x in enumerate(idx):
        tp = theta.copy()
        tm = theta.copy()
        tp[x] += h
        tm[x] -= h
        out[:, k] = (convex_F_grad(lat, tp, params)[idx] - convex_F_grad(lat, tm, params)[idx]) / (2 * h)
    return 0.5 * (out + out.T)


def midpoint_margin(lat: Lattice, theta1, theta2, params: ModelParams) -> float:
    """``(F(theta1) + F(theta2))/2 - F(midpoint)``; non-negative for convex ``F``."""
    t1 = _check_theta(theta1, lat, params.x0)
    t2 = _check_theta(theta2, lat, params.x0)
    return 0.5 * (convex_F(lat, t1, params) + convex_F(lat, t2, params)) - convex_F(lat, 0.5 * (t1 + t2), params)


def hessian_S2(lat: Lattice, omega_minus: float, params: ModelParams, H=None,
               tol: float = 1e-8) -> tuple[np.ndarray, float]:
    """Quadratic form of the saddle-point Hessian and its source-linear term.

    Returns ``(Q, h)`` with ``S2[u, H] = u^T Q u + h`` for ``u`` indexed by the
    sites ``x != x0`` and
    ``Q_xy = -[D(x-y)^2 - lam^2 D(x-x0)^2 D(y-x0)^2] / 4``,
    ``h = (lam/2) sum_xy H_xy D(x-y)``.

    ``omega_minus`` must solve the gap equation: ``-lam D_xx = 1`` to ``tol``.
    """
    from .gap_solver import propagator_D

    H = validate_source(H, lat.V)
    D = propagator_D(omega_minus, lat)
    lam = params.lam
    if abs(-lam * D[0, 0] - 1.0) > tol:
        raise ValueError(
            f"omega={omega_minus!r} is not a certified gap solution for lambda={lam} "
            f"(-lam D_xx = {-lam * D[0, 0]!r})"
        )
    Q = -0.25 * saddle_brackets(D, lam, params.x0)
    h = 0.5 * lam * float(np.sum(H * D))
    return Q, h


def saddle_brackets(D: np.ndarray, lam: float, x0: int) -> np.ndarray:
    """``D(x-y)^2 - lam^2 D(x-x0)^2 D(y-x0)^2`` for ``x, y != x0``."""
    Dh = delete_site(D, x0)
    d0 = np.delete(D[:, x0], x0)
    return np.asarray(Dh) ** 2 - lam**2 * np.outer(d0**2, d0**2)


def pinned(theta, x0: int = 0) -> np.ndarray:
    """Copy of ``theta`` with the ``x0`` entry set to zero."""
    out = np.array(theta, dtype=float)
    out[x0] = 0.0
    return out


def boundary_ray(lat: Lattice, a_star, params: ModelParams, depths=range(1, 11)):
    """Values of ``S`` along ``a(t) = a* - t lmin 1`` with ``t = 1 - 10^-k``.

    ``lmin`` is the smallest eigenvalue of ``A_hat(a*)``, so ``t = 1`` is on
    the boundary of the domain.  Returns ``(t, S)`` arrays.
    """
    a_star = _check_a(a_star, lat)
    hat = delete_site(_tilde(lat, a_star, np.zeros((lat.V, lat.V)), params), params.x0)
    lmin = float(np.linalg.eigvalsh(hat)[0])
    ts = np.array([1.0 - 10.0 ** (-k) for k in depths])
    values = []
    for t in ts:
        a = a_star - t * lmin
        values.append(dual_action_value(lat, a, None, params))
    return ts, np.array(values)


__all__ = [
    "DomainError",
    "DualMatrices",
    "ModelParams",
    "boundary_ray",
    "build_A",
    "chi",
    "constrained_a_x0",
    "convex_F",
    "convex_F_grad",
    "convex_F_hessian",
    "dual_action_value",
    "grad_dual_action",
    "hess_dual_action",
    "hessian_S2",
    "in_domain",
    "midpoint_margin",
    "pinned",
    "r_field",
    "r_field_solve",
    "saddle_brackets",
    "site_sums",
    "theta_matrix",
    "theta_of_a",
    "validate_source",
]

