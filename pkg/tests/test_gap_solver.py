import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, special
from scipy.optimize import brentq

from hypsigma import dual_action as da
from hypsigma import gap_solver as gs
from hypsigma.lattice import build_lattice, laplacian, momentum_spectrum
from hypsigma.latmat import delete_site, is_positive_definite


def _energies(d, L):
    """Independent E_p from the printed formula."""
    n = np.array(np.meshgrid(*[np.arange(L)] * d, indexing="ij")).reshape(d, -1)
    return 2 * d - 2 * np.cos(2 * np.pi * n / L).sum(axis=0), n


def _bisect_oracle(lam, d, L, tol=1e-14):
    E, _ = _energies(d, L)
    f = lambda w: np.mean(1.0 / (E + w)) + 1.0 / lam
    lo, hi = -(4 / (2 * d + 1)) * np.sin(np.pi / L) ** 2, -1e-15
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_gap_lhs_hand_sum():
    lat = build_lattice(2, 2)
    expected = 0.25 * (1 / -0.5 + 2 / 3.5 + 1 / 7.5)
    assert gs.gap_lhs(-0.5, lat) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(-0.3238095238, rel=1e-9)


def test_gap_lhs_zero_mode_pole():
    lat = build_lattice(2, 4)
    assert gs.gap_lhs(-1e-10, lat) < -1e8
    with pytest.raises(gs.PoleError):
        gs.gap_lhs(0.0, lat)
    with pytest.raises(gs.PoleError):
        gs.gap_lhs(-4 * np.sin(np.pi / 4) ** 2, lat)


def test_gap_lhs_strictly_decreasing():
    lat = build_lattice(2, 5)
    w = np.linspace(-4 * np.sin(np.pi / 5) ** 2, 0, 502)[1:-1]
    vals = np.array([gs.gap_lhs(x, lat) for x in w])
    assert np.all(np.diff(vals) < 0)


def test_single_sign_change_in_interval():
    for L in (3, 6, 10):
        lat = build_lattice(2, L)
        lo, hi = gs.gap_interval(lat)
        w = np.linspace(lo, hi, 4002)[1:-1]
        f = np.array([gs.gap_lhs(x, lat) + 1.0 for x in w])
        assert np.sum(np.diff(np.sign(f)) != 0) == 1


@pytest.mark.parametrize("L", [3, 4, 7, 12])
@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
def test_solution_certified(L, lam):
    sol = gs.solve_gap(lam, build_lattice(2, L))
    assert sol.passed, sol.certificates
    lo, _ = gs.gap_interval(build_lattice(2, L))
    assert lo < sol.omega_minus < 0
    assert sol.omega_x0 == pytest.approx(sol.omega_minus + lam, abs=1e-10)
    assert sol.residual <= 1e-13


def test_matches_bisection_oracle():
    sol = gs.solve_gap(1.0, build_lattice(2, 4))
    assert sol.omega_minus == pytest.approx(_bisect_oracle(1.0, 2, 4), abs=1e-12)


def test_three_dimensional_solution():
    sol = gs.solve_gap(1.0, build_lattice(3, 4))
    assert sol.passed
    assert sol.omega_minus == pytest.approx(_bisect_oracle(1.0, 3, 4), abs=1e-12)


@given(st.floats(0.05, 20), st.floats(0.05, 20))
def test_monotone_in_lambda(l1, l2):
    if abs(l1 - l2) < 1e-3:
        return
    lat = build_lattice(2, 4)
    lo, hi = sorted((l1, l2))
    assert gs.solve_gap(lo, lat).omega_minus > gs.solve_gap(hi, lat).omega_minus


def test_invalid_lambda():
    with pytest.raises(ValueError):
        gs.solve_gap(-1.0, build_lattice(2, 3))


def test_propagator_fft_oracle():
    for d, L in [(2, 4), (2, 5), (3, 3)]:
        lat = build_lattice(d, L)
        w = -0.01
        E = momentum_spectrum(lat).energies.reshape((L,) * d)
        fft_row = np.fft.ifftn(1.0 / (E + w)).real.ravel()
        assert np.allclose(gs.propagator_row(w, lat), fft_row, rtol=1e-12, atol=1e-12)


def test_propagator_properties():
    lat = build_lattice(2, 4)
    sol = gs.solve_gap(1.0, lat)
    D = gs.propagator_D(sol.omega_minus, lat)
    assert np.array_equal(D, D.T)
    assert np.allclose(np.diag(D), gs.gap_lhs(sol.omega_minus, lat), rtol=1e-13)
    resid = (laplacian(lat) + sol.omega_minus * np.eye(lat.V)) @ D - np.eye(lat.V)
    assert np.max(np.abs(resid)) <= 1e-9
    assert np.all(-1.0 * D >= 1 - 1e-9)
    shift = (1, 2)
    perm = np.array([lat.translate(x, shift) for x in range(lat.V)])
    assert np.allclose(D[np.ix_(perm, perm)], D, rtol=1e-13)


def test_propagator_pole():
    with pytest.raises(gs.PoleError):
        gs.propagator_D(0.0, build_lattice(2, 3))


def test_omega_x0_and_zero_determinant():
    lat = build_lattice(2, 3)
    sol = gs.solve_gap(1.0, lat)
    assert gs.omega_x0_of(sol.omega_minus, lat) == pytest.approx(sol.omega_minus + 1.0, abs=1e-12)
    M = gs.saddle_matrix(lat, sol.omega_minus, 1.0)
    Mtilde = laplacian(lat) + sol.omega_minus * np.eye(lat.V)
    assert abs(np.linalg.det(M)) <= 1e-8 * abs(np.linalg.det(Mtilde))
    assert is_positive_definite(delete_site(M, 0))


def test_saddle_satisfies_stationarity_everywhere():
    lat = build_lattice(2, 5)
    sol = gs.solve_gap(2.0, lat)
    D = sol.propagator()
    assert np.max(np.abs(-2.0 * np.diag(D) - 1)) <= 1e-10


def test_roots_characterized_by_both_conditions():
    """Among all roots of the gap equation only omega_minus meets either condition."""
    for L in (3, 4, 5):
        lat = build_lattice(2, L)
        lo, _ = gs.gap_interval(lat)
        E = np.unique(np.round(momentum_spectrum(lat).energies, 12))
        for lam in (0.5, 1.0, 2.0):
            f = lambda w: gs.gap_lhs(w, lat) + 1 / lam
            ivs = [(-E[k + 1] + 1e-10, -E[k] - 1e-10) for k in range(1, len(E) - 1)]
            ivs.append((-E[1] + 1e-10, -1e-13))
            roots = [brentq(f, a, b, xtol=1e-15) for a, b in ivs if f(a) * f(b) < 0]
            in_interval = [lo < r < 0 for r in roots]
            bounded = [bool(np.all(-lam * gs.propagator_row(r, lat) >= 1 - 1e-9)) for r in roots]
            assert in_interval == bounded
            assert sum(in_interval) == 1
            assert roots[in_interval.index(True)] == pytest.approx(gs.solve_gap(lam, lat).omega_minus, abs=1e-12)


def test_interval_and_bound_agree_on_scan():
    """Scan of omega with lambda(omega) = -1/gap_lhs(omega), kept where lambda > 0."""
    lat = build_lattice(2, 4)
    lo, _ = gs.gap_interval(lat)
    E = np.unique(np.round(momentum_spectrum(lat).energies, 12))
    w = np.linspace(-8.5, -1e-4, 6001)
    w = w[np.min(np.abs(w[:, None] + E[None, :]), axis=1) > 1e-3]
    checked = 0
    for x in w:
        lam = -1.0 / gs.gap_lhs(x, lat)
        if lam <= 0:
            continue
        checked += 1
        assert (lo < x < 0) == bool(np.all(-lam * gs.propagator_row(x, lat) >= 1 - 1e-12))
    assert checked > 100


def test_descent_from_saddle_needs_no_steps():
    lat = build_lattice(2, 3)
    params = da.ModelParams(N=2, lam=1.0)
    sol = gs.solve_gap(1.0, lat)
    theta_star = da.theta_of_a(lat, gs.saddle_a_field(lat, sol.omega_minus, 1.0), params)
    res = gs.descend(lat, params, theta_star)
    assert res.iterations == 0 and res.grad_norm <= 1e-8


def test_descent_from_origin_reaches_constant_pattern():
    lat = build_lattice(2, 3)
    params = da.ModelParams(N=2, lam=1.0)
    sol = gs.solve_gap(1.0, lat)
    res = gs.descend(lat, params, np.zeros(lat.V))
    assert res.converged
    assert np.max(np.abs(res.a[1:] - sol.omega_minus)) <= 1e-6
    assert res.a[0] == pytest.approx(sol.omega_x0, abs=1e-6)


def test_unique_minimum_few_starts():
    rep = gs.verify_unique_minimum(build_lattice(2, 3), 0.5, n_starts=5, seed=3)
    assert rep.passed and rep.n_converged == 5


def test_asymptotic_gap_two_dimensions():
    assert gs.asymptotic_gap(1.0, 4096, 2) == pytest.approx(4 * np.pi / (12 * np.log(2)), rel=1e-14)
    assert gs.asymptotic_gap(1.0, 4096, 2) == pytest.approx(1.5108, abs=1e-4)
    with pytest.raises(ValueError):
        gs.asymptotic_gap(1.0, 16, 1)


def test_lattice_constant_bessel_oracle():
    exact, _ = integrate.quad(lambda t: special.ive(0, 2 * t) ** 3, 0, np.inf, limit=500, epsabs=1e-13)
    c64 = gs.lattice_sum_constant(3, 64)
    c96 = gs.lattice_sum_constant(3, 96)
    assert c64 == pytest.approx(exact, rel=1e-4)
    assert abs(c64 - c96) / c96 <= 1e-3
    with pytest.raises(ValueError):
        gs.lattice_sum_constant(2)


def test_plain_sum_bessel_trend():
    exact, _ = integrate.quad(lambda t: special.ive(0, 2 * t) ** 3, 0, np.inf, limit=500)
    errs = [abs(gs.plain_lattice_sum(3, L) - exact) for L in (8, 16, 32)]
    assert errs[0] > errs[1] > errs[2]
