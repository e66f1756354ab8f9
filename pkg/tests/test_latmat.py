import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_spd
from hypsigma.lattice import build_lattice, laplacian
from hypsigma.latmat import (
    HattedMatrix,
    NotPositiveDefiniteError,
    SingularMatrixError,
    delete_site,
    hat_inverse_from_full,
    int_det,
    inverse,
    is_positive_definite,
    logdet,
    verify_aux_identities,
)


def test_delete_site_identity():
    out = delete_site(np.eye(3), 1)
    assert isinstance(out, HattedMatrix) and out.deleted_site == 1
    assert np.array_equal(out, np.eye(2))


def test_delete_site_ring():
    assert np.array_equal(delete_site(laplacian(build_lattice(1, 3)), 0), [[2, -1], [-1, 2]])


def test_delete_site_bad_index():
    with pytest.raises((IndexError, ValueError)):
        delete_site(np.eye(3), 3)


def test_hatted_laplacian_determinant_is_tree_count():
    lap_hat = delete_site(laplacian(build_lattice(2, 3)), 0)
    assert int_det(lap_hat.astype(int)) == 11664
    assert logdet(lap_hat) == pytest.approx(np.log(11664), rel=1e-12)


def test_positive_definite_examples():
    assert is_positive_definite(np.eye(5))
    assert not is_positive_definite(laplacian(build_lattice(2, 3)))
    assert is_positive_definite(delete_site(laplacian(build_lattice(2, 3)), 0))


def test_logdet_examples():
    assert logdet(np.eye(4)) == 0.0
    assert logdet(np.diag([2.0, 3.0])) == pytest.approx(np.log(6), rel=1e-14)
    with pytest.raises(NotPositiveDefiniteError):
        logdet(-np.eye(2))


def test_logdet_eigen_oracle(rng):
    for n in (5, 40, 100):
        A = random_spd(rng, n)
        assert logdet(A) == pytest.approx(np.sum(np.log(np.linalg.eigvalsh(A))), rel=1e-10)


def test_inverse_examples():
    assert np.allclose(inverse(np.diag([2.0, 4.0])), np.diag([0.5, 0.25]), atol=0)
    M = laplacian(build_lattice(1, 3)) + np.eye(3)
    assert np.max(np.abs(M @ inverse(M) - np.eye(3))) <= 1e-12
    with pytest.raises(SingularMatrixError):
        inverse(laplacian(build_lattice(2, 3)))


def test_inverse_symmetric_and_accurate(rng):
    lat = build_lattice(2, 16)
    M = laplacian(lat) + np.diag(rng.uniform(0.1, 1, lat.V))
    Minv = inverse(M)
    assert np.max(np.abs(Minv - Minv.T)) <= 1e-12
    assert np.max(np.abs(M @ Minv - np.eye(lat.V))) <= 1e-10


def test_hat_inverse_identity():
    assert np.allclose(hat_inverse_from_full(np.eye(4), 2), np.eye(3), atol=0)


def test_hat_inverse_random_and_lattice(rng):
    A = random_spd(rng, 6)
    for x0 in range(6):
        direct = inverse(delete_site(A, x0))
        assert np.allclose(hat_inverse_from_full(inverse(A), x0), direct, atol=1e-10)
    B = laplacian(build_lattice(2, 2)) + np.diag(rng.uniform(0.1, 2, 4))
    assert np.allclose(hat_inverse_from_full(inverse(B), 0), inverse(delete_site(B, 0)), atol=1e-10)


def test_aux_identities_examples(rng):
    A = random_spd(rng, 8)
    rep = verify_aux_identities(A, 3, 0.0)
    assert rep.passed and rep.residuals["rank_one_inverse"] <= 1e-15
    rep = verify_aux_identities(A, 3, 0.7)
    assert max(rep.residuals.values()) <= 1e-10
    B = laplacian(build_lattice(2, 2)) + np.eye(4)
    rep = verify_aux_identities(B, 0, -0.3)
    assert max(rep.residuals.values()) <= 1e-10
    assert set(rep.residuals) >= {"hat_inverse", "det_ratio", "rank_one_inverse", "x0_schur", "det_split"}


@settings(max_examples=200)
@given(st.integers(4, 30), st.integers(0, 2**32 - 1), st.floats(-0.9, 2.0))
def test_aux_identities_property(n, seed, c):
    rng = np.random.default_rng(seed)
    A = random_spd(rng, n)
    x0 = int(rng.integers(n))
    assert verify_aux_identities(A, x0, c).passed


@given(st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_det_split_exact_on_integers(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.integers(-5, 6, (n, n))
    A = A + A.T
    x0 = int(rng.integers(n))
    c = int(rng.integers(-4, 5))
    tilde = A.copy()
    tilde[x0, x0] += c
    hat = np.delete(np.delete(A, x0, 0), x0, 1)
    assert int_det(A) == int_det(tilde) - c * int_det(hat)


@given(arrays(np.float64, (3, 3), elements=st.integers(-20, 20).map(float)))
def test_int_det_matches_float(M):
    assert int_det(M.astype(int)) == round(np.linalg.det(M))


@settings(max_examples=500)
@given(st.integers(1, 20), st.integers(0, 2**32 - 1))
def test_positive_definite_matches_eigen_oracle(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, n))
    A = (X + X.T) / 2 + rng.uniform(-1, 3) * np.eye(n)
    ev = np.linalg.eigvalsh(A)
    if abs(ev[0]) < 1e-8 * max(1, abs(ev).max()):
        return  # too close to the boundary to call
    assert is_positive_definite(A) == (ev[0] > 0)
