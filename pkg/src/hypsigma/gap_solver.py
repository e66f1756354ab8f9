"""Gap equation, propagator and certification of the large-N saddle point.

The saddle point is translation invariant off the frozen site: ``a_x = omega``
for ``x != x0`` and ``a_x0 = omega + lam``, where ``omega = omega_minus`` is
the unique root of

    (1/V) sum_p 1 / (E_p + omega) = -1 / lam

in ``(-(4/(2d+1)) sin^2(pi/L), 0)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import dual_action as da
from .latmat import NotPositiveDefiniteError, cholesky, delete_site
from .lattice import Lattice, _energy_grid, build_lattice, laplacian, momentum_spectrum, softest_energy

log = logging.getLogger(__name__)

POLE_ATOL = 1e-14


class PoleError(ValueError):
    """``omega`` sits on (or numerically next to) a pole ``-E_p``."""


class BracketError(RuntimeError):
    pass


def gap_interval(lat: Lattice) -> tuple[float, float]:
    """Open interval ``(-(4/(2d+1)) sin^2(pi/L), 0)`` holding the physical root."""
    return -4.0 / (2 * lat.d + 1) * np.sin(np.pi / lat.L) ** 2, 0.0


def _check_poles(omega: float, energies: np.ndarray) -> np.ndarray:
    den = energies + omega
    if np.min(np.abs(den)) <= POLE_ATOL:
        raise PoleError(f"omega={omega!r} hits a pole of the momentum sum")
    return den


def gap_lhs(omega: float, lat: Lattice) -> float:
    """``(1/V) sum_p 1/(E_p + omega)`` (exact momentum sum)."""
    den = _check_poles(omega, momentum_spectrum(lat).energies)
    return float(np.mean(1.0 / den))


def _gap_lhs_derivative(omega: float, energies: np.ndarray) -> float:
    return float(-np.mean(1.0 / (energies + omega) ** 2))


def propagator_row(omega: float, lat: Lattice, chunk: int = 512) -> np.ndarray:
    """``D(s) = (1/V) sum_p cos(p.s) / (E_p + omega)`` for every displacement ``s``.

    Entry ``s`` is indexed like a site.  The phase ``p.s`` is reduced modulo
    ``L`` in integer arithmetic before taking the cosine.
    """
    energies = momentum_spectrum(lat).energies
    weights = 1.0 / _check_poles(omega, energies)
    cos_table = np.cos(2.0 * np.pi * np.arange(lat.L) / lat.L)
    n = lat.coords
    out = np.empty(lat.V)
    for start in range(0, lat.V, chunk):
        s = n[start:start + chunk]
        phase = (s @ n.T) % lat.L
        out[start:start + chunk] = cos_table[phase] @ weights
    return out / lat.V


def propagator_D(omega: float, lat: Lattice) -> np.ndarray:
    """Full translation-invariant ``D_xy = D(y - x)``; inverse of ``-Delta + omega``."""
    row = propagator_row(omega, lat)
    return row[lat.displacement_table]


def omega_x0_of(omega: float, lat: Lattice) -> float:
    """``omega - 1 / gap_lhs(omega)``: the frozen-site parameter on solutions."""
    g = gap_lhs(omega, lat)
    if g == 0.0:
        raise ZeroDivisionError("gap_lhs vanishes at this omega")
    return omega - 1.0 / g


def saddle_matrix(lat: Lattice, omega: float, lam: float, x0: int = 0) -> np.ndarray:
    """``M = -Delta + omega I + lam e_x0 e_x0^T``."""
    M = laplacian(lat) + omega * np.eye(lat.V)
    M[x0, x0] += lam
    return M


def saddle_a_field(lat: Lattice, omega: float, lam: float, x0: int = 0) -> np.ndarray:
    a = np.full(lat.V, float(omega))
    a[x0] = omega + lam
    return a


@dataclass
class Certificate:
    value: float
    bound: float
    passed: bool


@dataclass
class GapSolution:
    lam: float
    d: int
    L: int
    V: int
    omega_minus: float
    omega_x0: float
    residual: float
    D_row: np.ndarray = field(repr=False)
    certificates: dict[str, Certificate] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.certificates.values())

    @property
    def scaled_gap(self) -> float:
        """``-V omega_minus``."""
        return -self.V * self.omega_minus

    def propagator(self) -> np.ndarray:
        return self.D_row[build_lattice(self.d, self.L).displacement_table]


def _bisect(f, lo: float, hi: float, tol: float) -> tuple[float, float]:
    flo, fhi = f(lo), f(hi)
    if not (flo > 0 > fhi):
        raise BracketError(f"no sign change on [{lo!r}, {hi!r}]: f={flo!r}, {fhi!r}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return lo, hi


def solve_gap(lam: float, lat: Lattice, tol: float = 1e-13, x0: int = 0,
              det_check_max_V: int = 1024) -> GapSolution:
    """Solve the gap equation for ``omega_minus`` and certify the saddle point.

    Bisection on the certified interval down to ``tol``, then two Newton steps
    that are kept only if they stay inside the final bracket.  Certificates:

    ``interval``           root strictly inside ``(-(4/(2d+1)) sin^2(pi/L), 0)``
    ``unit_diagonal``      ``max_x |-lam D_xx - 1| <= 1e-10``
    ``correlation_floor``  ``min_xy (-lam D_xy) >= 1 - 1e-9``
    ``omega_x0``           ``|omega_x0(omega) - (omega + lam)| <= 1e-10``
    ``det_M``              ``s_min(M) <= 1e-8 s_max(M)`` (only for ``V <= det_check_max_V``)
    ``M_hat_pd``           ``M_hat`` positive definite (same size limit)
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam!r}")
    if lat.d < 2:
        raise ValueError("the gap equation needs d >= 2")
    if tol <= 0:
        raise ValueError("tol must be positive")
    energies = momentum_spectrum(lat).energies
    lo_open, _ = gap_interval(lat)

    # no pole guard here: the bracket end -1e-15 is closer to the zero mode than POLE_ATOL
    def f(w):
        return float(np.mean(1.0 / (energies + w))) + 1.0 / lam

    lo, hi = _bisect(f, lo_open + 1e-15, -1e-15, tol)
    omega = 0.5 * (lo + hi)
    for _ in range(2):
        step = f(omega) / _gap_lhs_derivative(omega, energies)
        cand = omega - step
        if lo <= cand <= hi and abs(f(cand)) <= abs(f(omega)):
            omega = cand
    residual = abs(f(omega))

    row = propagator_row(omega, lat)
    g = -lam * row
    certs = {
        "interval": Certificate(omega, lo_open, bool(lo_open < omega < 0.0)),
        "unit_diagonal": Certificate(float(abs(g[0] - 1.0)), 1e-10, bool(abs(g[0] - 1.0) <= 1e-10)),
        "correlation_floor": Certificate(float(np.min(g)), 1.0 - 1e-9, bool(np.min(g) >= 1.0 - 1e-9)),
    }
    omega_x0 = omega_x0_of(omega, lat)
    dev = abs(omega_x0 - (omega + lam))
    certs["omega_x0"] = Certificate(dev, 1e-10, bool(dev <= 1e-10))
    if lat.V <= det_check_max_V:
        M = saddle_matrix(lat, omega, lam, x0)
        s = np.linalg.svd(M, compute_uv=False)
        ratio = float(s[-1] / s[0])
        certs["det_M"] = Certificate(ratio, 1e-8, ratio <= 1e-8)
        try:
            low = cholesky(delete_site(M, x0))
            pmin = float(np.min(np.diag(low)) ** 2)
        except NotPositiveDefiniteError:
            pmin = 0.0
        certs["M_hat_pd"] = Certificate(pmin, 0.0, pmin > 0.0)
    sol = GapSolution(lam=float(lam), d=lat.d, L=lat.L, V=lat.V, omega_minus=float(omega),
                      omega_x0=float(omega_x0), residual=residual, D_row=row, certificates=certs)
    if not sol.passed:
        log.warning("gap solution d=%d L=%d lam=%g failed certificates: %s", lat.d, lat.L, lam,
                    [k for k, c in certs.items() if not c.passed])
    return sol


# ---------------------------------------------------------------------------
# multi-start descent

@dataclass
class DescentResult:
    theta: np.ndarray
    a: np.ndarray
    iterations: int
    grad_norm: float
    converged: bool


def descend(lat: Lattice, params: da.ModelParams, theta0, gtol: float = 1e-9,
            max_iter: int = 200) -> DescentResult:
    """Damped Newton minimisation of the strictly convex ``F(theta)``.

    The Hessian is a central-difference Jacobian of the analytic gradient.
    Steps use Armijo backtracking; if the Hessian estimate is not positive
    definite the step falls back to steepest descent.
    """
    x0 = params.x0
    theta = da.pinned(theta0, x0)
    idx = np.delete(np.arange(lat.V), x0)

    def fun(t):
        return da.convex_F(lat, t, params)

    def grad(t):
        return da.convex_F_grad(lat, t, params)

    def hessian(t):
        return da.convex_F_hessian(lat, t, params)

    value = fun(theta)
    g = grad(theta)
    it = 0
    while np.max(np.abs(g)) > gtol and it < max_iter:
        hess = hessian(theta)
        try:
            low = cholesky(hess)
            step_hat = -np.linalg.solve(low.T, np.linalg.solve(low, g[idx]))
        except NotPositiveDefiniteError:
            step_hat = -g[idx]
        step = np.zeros(lat.V)
        step[idx] = step_hat
        slope = float(g @ step)
        t = 1.0
        while True:
            cand = theta + t * step
            cand_value = fun(cand)
            if cand_value <= value + 1e-4 * t * slope or t < 1e-12:
                break
            t *= 0.5
        theta, value = cand, cand_value
        g = grad(theta)
        it += 1
    gnorm = float(np.max(np.abs(g)))
    return DescentResult(theta=theta, a=da.chi(lat, theta, None, params), iterations=it,
                         grad_norm=gnorm, converged=gnorm <= gtol)


@dataclass
class UniquenessReport:
    omega_minus: float
    n_starts: int
    deviations: list[float]
    iterations: list[int]
    tolerance: float = 1e-6

    @property
    def n_converged(self) -> int:
        return sum(d <= self.tolerance for d in self.deviations)

    @property
    def max_deviation(self) -> float:
        return max(self.deviations) if self.deviations else 0.0

    @property
    def passed(self) -> bool:
        return self.n_converged == self.n_starts


def verify_unique_minimum(lat: Lattice, lam: float, n_starts: int, seed=None, x0: int = 0,
                          theta_scale: float = 1.0, tolerance: float = 1e-6) -> UniquenessReport:
    """Descend from ``n_starts`` random interior points and compare with the gap solution.

    Start points are ``chi(theta)`` with ``theta`` uniform in
    ``[-theta_scale, theta_scale]``, which always lie inside the domain.  The
    deviation of a run is ``max_{x != x0} |a_x - omega_minus|``.
    """
    params = da.ModelParams(N=2, lam=lam, x0=x0)  # N does not enter at H = 0
    sol = solve_gap(lam, lat)
    rng = np.random.default_rng(seed)
    idx = np.delete(np.arange(lat.V), x0)
    devs, iters = [], []
    for _ in range(n_starts):
        theta0 = da.pinned(rng.uniform(-theta_scale, theta_scale, lat.V), x0)
        res = descend(lat, params, theta0)
        devs.append(float(np.max(np.abs(res.a[idx] - sol.omega_minus))))
        iters.append(res.iterations)
    return UniquenessReport(omega_minus=sol.omega_minus, n_starts=n_starts, deviations=devs,
                            iterations=iters, tolerance=tolerance)


# ---------------------------------------------------------------------------
# large-volume asymptotics

def plain_lattice_sum(d: int, L: int) -> float:
    """``(1/V) sum_{p != 0} 1/E_p`` on the ``L^d`` lattice."""
    e = _energy_grid(d, L)
    return float(np.sum(1.0 / e[1:]) / e.size)


@lru_cache(maxsize=None)
def lattice_sum_constant(d: int, L_ref: int = 64) -> float:
    """Estimate of ``C_d``, the Brillouin-zone average of ``1/E(p)``, for ``d >= 3``.

    The finite sums approach ``C_d`` with a correction proportional to
    ``L^(2-d)``; combining ``L_ref`` and ``L_ref // 2`` removes it.
    """
    if d < 3:
        raise ValueError("C_d diverges for d < 3")
    q = d - 2
    L1, L2 = L_ref, L_ref // 2
    s1, s2 = plain_lattice_sum(d, L1), plain_lattice_sum(d, L2)
    return (L1**q * s1 - L2**q * s2) / (L1**q - L2**q)


def asymptotic_gap(lam: float, V: int, d: int, L_ref: int = 64) -> float:
    """Leading large-volume prediction for ``-V omega_minus``.

    ``4 pi / ln V`` in two dimensions, ``(1/lam + C_d)^-1`` for ``d >= 3``.
    """
    if d < 2:
        raise ValueError("d must be >= 2")
    if d == 2:
        return 4.0 * np.pi / np.log(V)
    return 1.0 / (1.0 / lam + lattice_sum_constant(d, L_ref))


__all__ = [
    "BracketError",
    "Certificate",
    "DescentResult",
    "GapSolution",
    "PoleError",
    "UniquenessReport",
    "asymptotic_gap",
    "descend",
    "gap_interval",
    "gap_lhs",
    "lattice_sum_constant",
    "omega_x0_of",
    "plain_lattice_sum",
    "propagator_D",
    "propagator_row",
    "saddle_a_field",
    "saddle_matrix",
    "solve_gap",
    "softest_energy",
    "verify_unique_minimum",
]
